#pragma once

// Joint optimization of Gaussians, per-camera pose adjustments and persistent
// track points: photometric loss plus a Huber reprojection loss over the
// tracks seen by the current batch.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jsfm/bundle_adjustment.hpp"
#include "jsfm/error.hpp"
#include "jsfm/geometry.hpp"
#include "jsfm/image.hpp"
#include "jsfm/metrics.hpp"
#include "jsfm/rng.hpp"
#include "jsfm/robust.hpp"
#include "jsfm/scene.hpp"
#include "jsfm/splat.hpp"
#include "jsfm/types.hpp"

namespace jsfm {

enum class Ablation { kFull, kFrozenPoses, kPhotometricOnly, kMergedTracks };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kFrozenPoses: return "frozen-poses";
    case Ablation::kPhotometricOnly: return "photometric-only";
    case Ablation::kMergedTracks: return "merged-tracks";
  }
  return "full";
}

inline Ablation parse_ablation(std::string s) {
  for (auto& c : s)
    if (c == '_') c = '-';
  if (s == "full") return Ablation::kFull;
  if (s == "frozen-poses") return Ablation::kFrozenPoses;
  if (s == "photometric-only") return Ablation::kPhotometricOnly;
  if (s == "merged-tracks") return Ablation::kMergedTracks;
  throw Error(ErrorKind::kInvalidArgument, "unknown ablation: " + s);
}

struct JointState {
  GaussianSet gaussians;
  std::vector<Pose> base_poses;
  std::vector<Vec6> pose_adjustments;  // left twists, pose = exp(dT) * base
  std::vector<Vec3> track_points;      // separate from the Gaussian positions
  std::vector<Track> tracks;
  std::vector<CameraIntrinsics> intrinsics;
  std::vector<int> track_gaussian;  // primitive seeded from the same point, -1 if none
  int anchor = 0;

  int camera_count() const { return static_cast<int>(base_poses.size()); }
  Pose pose(int i) const { return se3_compose(base_poses[i], pose_adjustments[i]); }
  std::vector<Pose> poses() const {
    std::vector<Pose> out;
    for (int i = 0; i < camera_count(); ++i) out.push_back(pose(i));
    return out;
  }

  void validate() const {
    const size_t n = base_poses.size();
    require(pose_adjustments.size() == n && intrinsics.size() == n, ErrorKind::kInvalidArgument,
            "pose, adjustment and intrinsics counts differ");
    require(track_points.size() == tracks.size() && track_gaussian.size() == tracks.size(),
            ErrorKind::kInvalidArgument, "track points must be 1:1 with tracks");
    require(anchor >= 0 && anchor < static_cast<int>(n), ErrorKind::kInvalidArgument, "anchor out of range");
    require(pose_adjustments[anchor].isZero(0.0), ErrorKind::kInvalidArgument, "anchor adjustment must be zero");
    for (const auto& t : tracks)
      for (const auto& o : t.observations)
        require(o.image >= 0 && o.image < static_cast<int>(n), ErrorKind::kInvalidArgument,
                "observation references an unknown camera");
    for (int g : track_gaussian)
      require(g < static_cast<int>(gaussians.size()), ErrorKind::kInvalidArgument, "bad track primitive index");
  }
};

/// Track points start at the SfM points; one primitive per point.
inline JointState init_joint_state(const std::vector<Pose>& poses, const std::vector<CameraIntrinsics>& intrinsics,
                                   const std::vector<Track>& tracks, int sh_degree = 0, int anchor = 0) {
  JointState s;
  s.base_poses = poses;
  s.pose_adjustments.assign(poses.size(), Vec6::Zero());
  s.intrinsics = intrinsics;
  s.anchor = anchor;
  std::vector<Vec3> pts, colors;
  for (const auto& t : tracks) {
    require(t.point.has_value(), ErrorKind::kInvalidArgument, "every track needs a triangulated point");
    s.track_gaussian.push_back(static_cast<int>(pts.size()));
    pts.push_back(*t.point);
    colors.push_back(t.color);
    s.tracks.push_back(t);
    s.track_points.push_back(*t.point);
  }
  s.gaussians = init_gaussians_from_points(pts, colors, sh_degree);
  s.validate();
  return s;
}

struct JointConfig {
  double lambda_ba = 1e-4;
  double huber_delta = 1.0;  // px
  double lambda_ssim = 0.2;
  double lr_pose = 1e-5;
  double lr_position = 1.6e-4;  // times extent
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_opacity = 5e-2;
  double lr_sh = 2.5e-3;
  double lr_track = 1e-4;  // times extent
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;
  int iterations = 3000;
  int batch_size = 1;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::kFull;
  double divergence_factor = 10.0;
  double extent = 0.0;  // 0: computed from the track points
  RenderOptions render;
  int checkpoint_every = 0;
  std::string checkpoint_path;

  void validate() const {
    for (double r : {lr_pose, lr_position, lr_scale, lr_rotation, lr_opacity, lr_sh, lr_track, huber_delta})
      require(r > 0.0, ErrorKind::kInvalidArgument, "rates and Huber threshold must be positive");
    require(lambda_ba >= 0.0, ErrorKind::kInvalidArgument, "lambda_ba must be non-negative");
    require(lambda_ssim >= 0.0 && lambda_ssim <= 1.0, ErrorKind::kInvalidArgument, "lambda_ssim must be in [0, 1]");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::kInvalidArgument,
            "Adam betas must be in [0, 1)");
    require(iterations >= 0 && batch_size >= 1, ErrorKind::kInvalidArgument, "bad iteration or batch count");
    require(divergence_factor > 1.0, ErrorKind::kInvalidArgument, "divergence factor must exceed 1");
    require(checkpoint_every >= 0, ErrorKind::kInvalidArgument, "checkpoint interval must be >= 0");
  }
};

struct BALossResult {
  double loss = 0.0;
  std::vector<Vec3> points;  // d loss / d X_k, one per track
  std::vector<Vec6> twists;  // d loss / d dT_i, one per camera
  std::vector<int> active_tracks;
};

namespace detail {

/// Tracks with at least one observation in the batch; all tracks if the batch is empty.
inline std::vector<int> batch_tracks(const std::vector<Track>& tracks, const std::vector<int>& batch) {
  std::vector<int> out;
  for (int k = 0; k < static_cast<int>(tracks.size()); ++k) {
    bool hit = batch.empty();
    for (const auto& o : tracks[k].observations) {
      if (hit) break;
      for (int b : batch) hit = hit || o.image == b;
    }
    if (hit) out.push_back(k);
  }
  return out;
}

inline BALossResult ba_loss(const JointState& s, const std::vector<Vec3>& points, const std::vector<int>& batch,
                            double huber_delta) {
  const auto kernel = RobustKernel::huber(huber_delta);
  BALossResult out;
  out.points.assign(s.tracks.size(), Vec3::Zero());
  out.twists.assign(s.base_poses.size(), Vec6::Zero());
  out.active_tracks = batch_tracks(s.tracks, batch);
  std::vector<Pose> poses = s.poses();
  std::vector<Mat6> Jl(poses.size());
  for (size_t i = 0; i < poses.size(); ++i) Jl[i] = se3_left_jacobian(s.pose_adjustments[i]);
  for (int k : out.active_tracks) {
    const Vec3& X = points[k];
    for (const auto& o : s.tracks[k].observations) {
      const Pose& T = poses[o.image];
      const auto& K = s.intrinsics[o.image];
      if (!(T.transform(X).z() > kDepthEpsilon)) {
        out.loss += kernel.value(kInvalidResidualSq);  // constant, no gradient
        continue;
      }
      const Vec2 r = project(K, T, X) - o.pixel;
      const double sq = r.squaredNorm();
      out.loss += kernel.value(sq);
      const Vec2 g = 2.0 * kernel.derivative(sq) * r;
      const auto J = reprojection_jacobians(K, T, X);
      out.points[k] += J.point.transpose() * g;
      out.twists[o.image] += Jl[o.image].transpose() * (J.pose.transpose() * g);
    }
  }
  return out;
}

inline std::vector<Vec3> merged_points(const JointState& s) {
  std::vector<Vec3> pts = s.track_points;
  for (size_t k = 0; k < pts.size(); ++k)
    if (s.track_gaussian[k] >= 0) pts[k] = s.gaussians.positions[s.track_gaussian[k]];
  return pts;
}

}  // namespace detail

/// Huber reprojection loss over every observation of every track seen by the
/// batch cameras (all tracks when the batch is empty), with gradients to the
/// track points and to every camera's pose adjustment.
inline BALossResult joint_ba_loss(const JointState& s, const std::vector<int>& batch = {},
                                  double huber_delta = 1.0) {
  return detail::ba_loss(s, s.track_points, batch, huber_delta);
}

/// Gradients of one iteration, kept per loss so their combination can be checked.
struct JointGradients {
  double photo = 0.0;
  double ba = 0.0;
  double total = 0.0;
  std::vector<Vec3> positions;
  std::vector<Vec3> log_scales;
  std::vector<Vec4> rotations;
  std::vector<double> opacity_logits;
  std::vector<double> sh;
  std::vector<Vec6> pose_photo;  // d L_photo / d dT
  std::vector<Vec6> pose_ba;     // d L_BA / d dT
  std::vector<Vec6> pose;        // applied: photo + lambda * BA, masked by ablation and anchor
  std::vector<Vec3> track_points;
};

/// L = mean photometric loss over the batch + lambda_BA * L_BA, and its
/// gradient under the configured ablation.
inline JointGradients joint_gradients(const JointState& s, const std::vector<Image>& images,
                                      const std::vector<int>& batch, const JointConfig& cfg) {
  const size_t n_cam = s.base_poses.size();
  const size_t n_g = s.gaussians.size();
  JointGradients G;
  G.positions.assign(n_g, Vec3::Zero());
  G.log_scales.assign(n_g, Vec3::Zero());
  G.rotations.assign(n_g, Vec4::Zero());
  G.opacity_logits.assign(n_g, 0.0);
  G.sh.assign(s.gaussians.sh.size(), 0.0);
  G.pose_photo.assign(n_cam, Vec6::Zero());
  G.pose.assign(n_cam, Vec6::Zero());

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (int i : batch) {
    require(i >= 0 && i < static_cast<int>(images.size()) && images[i].size() > 0, ErrorKind::kInvalidArgument,
            "batch camera has no image");
    const auto r = render_with_gradients(s.gaussians, s.intrinsics[i], s.pose(i), images[i], cfg.lambda_ssim,
                                         cfg.render);
    G.photo += inv_b * r.loss;
    for (size_t g = 0; g < n_g; ++g) {
      G.positions[g] += inv_b * r.positions[g];
      G.log_scales[g] += inv_b * r.log_scales[g];
      G.rotations[g] += inv_b * r.rotations[g];
      G.opacity_logits[g] += inv_b * r.opacity_logits[g];
    }
    for (size_t c = 0; c < G.sh.size(); ++c) G.sh[c] += inv_b * r.sh[c];
    G.pose_photo[i] += inv_b * (se3_left_jacobian(s.pose_adjustments[i]).transpose() * r.pose);
  }

  const bool merged = cfg.ablation == Ablation::kMergedTracks;
  const auto ba = detail::ba_loss(s, merged ? detail::merged_points(s) : s.track_points, batch, cfg.huber_delta);
  const double lambda = cfg.ablation == Ablation::kPhotometricOnly ? 0.0 : cfg.lambda_ba;
  G.ba = ba.loss;
  G.pose_ba = ba.twists;
  G.total = G.photo + lambda * G.ba;

  for (size_t i = 0; i < n_cam; ++i) G.pose[i] = G.pose_photo[i] + lambda * G.pose_ba[i];
  if (cfg.ablation == Ablation::kFrozenPoses)
    for (auto& p : G.pose) p.setZero();
  G.pose[s.anchor].setZero();

  G.track_points.assign(s.tracks.size(), Vec3::Zero());
  for (size_t k = 0; k < s.tracks.size(); ++k) {
    if (merged && s.track_gaussian[k] >= 0) {
      G.positions[s.track_gaussian[k]] += lambda * ba.points[k];
    } else {
      G.track_points[k] = lambda * ba.points[k];
    }
  }
  return G;
}

/// Forward-only total loss on a batch (no gradients).
inline double joint_loss(const JointState& s, const std::vector<Image>& images, const std::vector<int>& batch,
                         const JointConfig& cfg) {
  double photo = 0.0;
  for (int i : batch) {
    const Image r = render(s.gaussians, s.intrinsics[i], s.pose(i), images[i].width, images[i].height, cfg.render).image;
    photo += photometric_loss(r, images[i], cfg.lambda_ssim, false).loss / static_cast<double>(batch.size());
  }
  if (cfg.ablation == Ablation::kPhotometricOnly) return photo;
  const bool merged = cfg.ablation == Ablation::kMergedTracks;
  return photo +
         cfg.lambda_ba * detail::ba_loss(s, merged ? detail::merged_points(s) : s.track_points, batch, cfg.huber_delta).loss;
}

namespace detail {

/// Adam over a flat block of doubles.
class AdamBlock {
 public:
  void step(double* x, const double* g, size_t n, double lr, const JointConfig& c, int t) {
    if (m_.size() != n) {
      m_.assign(n, 0.0);
      v_.assign(n, 0.0);
    }
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (size_t k = 0; k < n; ++k) {
      m_[k] = c.beta1 * m_[k] + (1.0 - c.beta1) * g[k];
      v_[k] = c.beta2 * v_[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mh = m_[k] / bc1;
      const double vh = v_[k] / bc2;
      x[k] -= lr * mh / (std::sqrt(vh) + c.epsilon);
    }
  }

 private:
  std::vector<double> m_, v_;
};

inline std::vector<int> shuffled(int n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  Rng rng(seed, Stream::kBatchSampling, epoch);
  for (int i = n - 1; i > 0; --i) std::swap(v[i], v[rng.index(static_cast<std::uint64_t>(i) + 1)]);
  return v;
}

}  // namespace detail

struct TraceRow {
  int iteration = 0;
  double photo = 0.0;
  double ba = 0.0;
  double total = 0.0;
};

struct JointResult {
  JointState state;
  std::vector<TraceRow> trace;
};

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json gaussians_to_json(const GaussianSet& gs) {
  nlohmann::json j;
  j["sh_degree"] = gs.sh_degree;
  std::vector<double> pos, sc, rot;
  for (size_t i = 0; i < gs.size(); ++i) {
    for (int k = 0; k < 3; ++k) pos.push_back(gs.positions[i][k]);
    for (int k = 0; k < 3; ++k) sc.push_back(gs.log_scales[i][k]);
    for (int k = 0; k < 4; ++k) rot.push_back(gs.rotations[i][k]);
  }
  j["positions"] = pos;
  j["log_scales"] = sc;
  j["rotations"] = rot;
  j["opacity_logits"] = gs.opacity_logits;
  j["sh"] = gs.sh;
  return j;
}

inline GaussianSet gaussians_from_json(const nlohmann::json& j) {
  GaussianSet gs;
  gs.sh_degree = j.at("sh_degree").get<int>();
  const auto pos = j.at("positions").get<std::vector<double>>();
  const auto sc = j.at("log_scales").get<std::vector<double>>();
  const auto rot = j.at("rotations").get<std::vector<double>>();
  gs.opacity_logits = j.at("opacity_logits").get<std::vector<double>>();
  gs.sh = j.at("sh").get<std::vector<double>>();
  const size_t n = gs.opacity_logits.size();
  require(pos.size() == 3 * n && sc.size() == 3 * n && rot.size() == 4 * n &&
              gs.sh.size() == n * static_cast<size_t>(gs.sh_stride()),
          ErrorKind::kInvalidArgument, "inconsistent primitive arrays");
  for (size_t i = 0; i < n; ++i) {
    gs.positions.emplace_back(pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]);
    gs.log_scales.emplace_back(sc[3 * i], sc[3 * i + 1], sc[3 * i + 2]);
    gs.rotations.emplace_back(rot[4 * i], rot[4 * i + 1], rot[4 * i + 2], rot[4 * i + 3]);
  }
  return gs;
}

inline nlohmann::json joint_state_to_json(const JointState& s) {
  nlohmann::json j;
  j["anchor"] = s.anchor;
  j["gaussians"] = gaussians_to_json(s.gaussians);
  j["base_poses"] = nlohmann::json::array();
  j["pose_adjustments"] = nlohmann::json::array();
  j["intrinsics"] = nlohmann::json::array();
  for (int i = 0; i < s.camera_count(); ++i) {
    j["base_poses"].push_back(detail::to_json(s.base_poses[i]));
    const Vec6& d = s.pose_adjustments[i];
    j["pose_adjustments"].push_back(std::vector<double>(d.data(), d.data() + 6));
    j["intrinsics"].push_back(detail::to_json(s.intrinsics[i]));
  }
  j["tracks"] = nlohmann::json::array();
  j["track_points"] = nlohmann::json::array();
  for (size_t k = 0; k < s.tracks.size(); ++k) {
    j["tracks"].push_back(detail::to_json(s.tracks[k]));
    j["track_points"].push_back(detail::vec_json(s.track_points[k]));
  }
  j["track_gaussian"] = s.track_gaussian;
  return j;
}

inline JointState joint_state_from_json(const nlohmann::json& j) {
  JointState s;
  s.anchor = j.at("anchor").get<int>();
  s.gaussians = gaussians_from_json(j.at("gaussians"));
  for (const auto& p : j.at("base_poses")) s.base_poses.push_back(detail::pose_from_json(p));
  for (const auto& d : j.at("pose_adjustments")) {
    const auto v = d.get<std::vector<double>>();
    require(v.size() == 6, ErrorKind::kInvalidArgument, "pose adjustment needs 6 values");
    s.pose_adjustments.push_back(Eigen::Map<const Vec6>(v.data()));
  }
  for (const auto& K : j.at("intrinsics")) s.intrinsics.push_back(detail::intrinsics_from_json(K));
  for (const auto& t : j.at("tracks")) s.tracks.push_back(detail::track_from_json(t));
  for (const auto& x : j.at("track_points")) s.track_points.push_back(detail::vec3_from_json(x));
  s.track_gaussian = j.at("track_gaussian").get<std::vector<int>>();
  s.validate();
  return s;
}

inline void save_checkpoint(const JointState& s, const std::string& path) { write_json_file(joint_state_to_json(s), path); }
inline JointState load_checkpoint(const std::string& path) { return joint_state_from_json(read_json_file(path)); }

inline void write_loss_trace(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream f(path);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot write " + path);
  f << "iteration,L_photo,L_BA,total\n";
  char buf[128];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.iteration, r.photo, r.ba, r.total);
    f << buf;
  }
}

// ---------------------------------------------------------------------------

/// Adam on primitives, pose adjustments and track points. `images` is indexed
/// by camera; only `train` cameras are ever rendered (all cameras with an
/// image when empty). Other cameras move only through the reprojection term.
inline JointResult joint_optimize(JointState state, const std::vector<Image>& images, std::vector<int> train,
                                  const JointConfig& cfg,
                                  const std::function<void(int, const JointState&)>& on_iteration = {}) {
  cfg.validate();
  state.validate();
  require(images.size() == state.base_poses.size(), ErrorKind::kInvalidArgument, "one image slot per camera");
  if (train.empty())
    for (int i = 0; i < state.camera_count(); ++i)
      if (images[i].size() > 0) train.push_back(i);
  require(!train.empty(), ErrorKind::kInvalidArgument, "no training images");

  const double extent = cfg.extent > 0.0 ? cfg.extent : scene_extent(state.track_points);
  const bool merged = cfg.ablation == Ablation::kMergedTracks;
  if (merged) state.track_points = detail::merged_points(state);

  auto& gs = state.gaussians;
  detail::AdamBlock a_pos, a_scale, a_rot, a_op, a_sh, a_pose, a_track;
  JointResult res;
  const int n_train = static_cast<int>(train.size());
  // Divergence reference: each training image's loss at the initial state,
  // floored at the mean so images that start near zero loss don't trip it.
  std::vector<double> initial(images.size(), 0.0);
  if (cfg.iterations > 0) {
    double mean = 0.0;
    for (int i : train) mean += (initial[i] = joint_loss(state, images, {i}, cfg)) / n_train;
    for (int i : train) initial[i] = std::max(initial[i], mean);
  }
  std::vector<int> order;
  int cursor = n_train;
  std::uint64_t epoch = 0;

  for (int t = 1; t <= cfg.iterations; ++t) {
    std::vector<int> batch;
    while (static_cast<int>(batch.size()) < std::min(cfg.batch_size, n_train)) {
      if (cursor >= n_train) {
        order = detail::shuffled(n_train, cfg.seed, epoch++);
        cursor = 0;
      }
      batch.push_back(train[order[cursor++]]);
    }

    const auto G = joint_gradients(state, images, batch, cfg);
    res.trace.push_back({t, G.photo, G.ba, G.total});
    require(std::isfinite(G.total), ErrorKind::kDivergence, "non-finite loss");
    double reference = 0.0;
    for (int i : batch) reference += initial[i] / static_cast<double>(batch.size());
    if (G.total > cfg.divergence_factor * std::max(reference, 1e-12)) {
      throw Error(ErrorKind::kDivergence, "loss exceeded " + std::to_string(cfg.divergence_factor) +
                                              "x its initial value at iteration " + std::to_string(t));
    }

    const size_t n = gs.size();
    a_pos.step(gs.positions[0].data(), G.positions[0].data(), 3 * n, cfg.lr_position * extent, cfg, t);
    a_scale.step(gs.log_scales[0].data(), G.log_scales[0].data(), 3 * n, cfg.lr_scale, cfg, t);
    a_rot.step(gs.rotations[0].data(), G.rotations[0].data(), 4 * n, cfg.lr_rotation, cfg, t);
    a_op.step(gs.opacity_logits.data(), G.opacity_logits.data(), n, cfg.lr_opacity, cfg, t);
    a_sh.step(gs.sh.data(), G.sh.data(), gs.sh.size(), cfg.lr_sh, cfg, t);
    if (cfg.ablation != Ablation::kFrozenPoses) {
      const Vec6 anchor = state.pose_adjustments[state.anchor];
      a_pose.step(state.pose_adjustments[0].data(), G.pose[0].data(), 6 * state.pose_adjustments.size(),
                  cfg.lr_pose, cfg, t);
      state.pose_adjustments[state.anchor] = anchor;  // zero gradient keeps it, but be explicit
    }
    if (merged) {
      state.track_points = detail::merged_points(state);
    } else if (!state.track_points.empty()) {
      a_track.step(state.track_points[0].data(), G.track_points[0].data(), 3 * state.track_points.size(),
                   cfg.lr_track * extent, cfg, t);
    }

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() && t % cfg.checkpoint_every == 0)
      save_checkpoint(state, cfg.checkpoint_path);
    if (on_iteration) on_iteration(t, state);
  }
  res.state = std::move(state);
  return res;
}

struct ImageMetrics {
  int camera = -1;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct JointMetrics {
  std::vector<ImageMetrics> images;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<RotationErrors> rotation;
  std::optional<TrajectoryError> trajectory;
};

/// PSNR / SSIM on the listed cameras, plus pose errors when ground truth is given.
inline JointMetrics evaluate_state(const JointState& s, const std::vector<Image>& images,
                                   const std::vector<int>& cameras, const std::vector<Pose>& gt_poses = {},
                                   const RenderOptions& opt = {}) {
  JointMetrics m;
  for (int i : cameras) {
    require(i >= 0 && i < static_cast<int>(images.size()) && images[i].size() > 0, ErrorKind::kInvalidArgument,
            "evaluation camera has no image");
    const Image r = render(s.gaussians, s.intrinsics[i], s.pose(i), images[i].width, images[i].height, opt).image;
    m.images.push_back({i, psnr(r, images[i]), ssim(r, images[i]).value});
    m.psnr += m.images.back().psnr;
    m.ssim += m.images.back().ssim;
  }
  if (!m.images.empty()) {
    m.psnr /= static_cast<double>(m.images.size());
    m.ssim /= static_cast<double>(m.images.size());
  }
  if (!gt_poses.empty()) {
    const auto est = s.poses();
    m.rotation = rotation_error(est, gt_poses);
    m.trajectory = ate(est, gt_poses);
  }
  return m;
}

}  // namespace jsfm

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "jsfm/error.hpp"
#include "jsfm/geometry.hpp"
#include "jsfm/rng.hpp"
#include "jsfm/splat.hpp"
#include "jsfm/types.hpp"

namespace jsfm {

enum class Layout { kOrbit, kForward, kRandom };

inline std::string to_string(Layout l) {
  switch (l) {
    case Layout::kOrbit: return "orbit";
    case Layout::kForward: return "forward";
    case Layout::kRandom: return "random";
  }
  return "orbit";
}

inline Layout parse_layout(const std::string& s) {
  if (s == "orbit") return Layout::kOrbit;
  if (s == "forward") return Layout::kForward;
  if (s == "random") return Layout::kRandom;
  throw Error(ErrorKind::kParse, "unknown layout '" + s + "'");
}

struct SceneCamera {
  CameraIntrinsics intrinsics;
  Pose pose;
};

struct ScenePoint {
  Vec3 position = Vec3::Zero();
  Vec3 color = Vec3::Constant(0.5);
};

/// Ground truth for a synthetic reconstruction. Keypoint k in image i is the
/// observation of point k, so track k has id k.
struct Scene {
  std::vector<SceneCamera> cameras;
  std::vector<ScenePoint> points;
  std::vector<Track> tracks;
  std::uint64_t seed = 0;
  Layout layout = Layout::kOrbit;

  std::vector<Pose> poses() const {
    std::vector<Pose> out;
    for (const auto& c : cameras) out.push_back(c.pose);
    return out;
  }
  std::vector<CameraIntrinsics> intrinsics() const {
    std::vector<CameraIntrinsics> out;
    for (const auto& c : cameras) out.push_back(c.intrinsics);
    return out;
  }
  std::vector<Vec3> point_positions() const {
    std::vector<Vec3> out;
    for (const auto& p : points) out.push_back(p.position);
    return out;
  }
  std::vector<Vec3> point_colors() const {
    std::vector<Vec3> out;
    for (const auto& p : points) out.push_back(p.color);
    return out;
  }
};

struct SceneOptions {
  int image_width = 512;
  int image_height = 512;
  double focal = 420.0;
  double camera_distance = 3.0;
  /// A point is visible only from cameras within this angle of its random
  /// surface normal; 180 disables the test.
  double visibility_cone_deg = 80.0;
  double margin_px = 2.0;
  int max_retries = 200;
};

struct NoiseSpec {
  double pixel_sigma = 0.0;
  double outlier_fraction = 0.0;
  double pose_rotation_perturb_deg = 0.0;
  double pose_translation_perturb = 0.0;  // fraction of scene extent
  std::uint64_t seed = 0;

  void validate() const {
    require(pixel_sigma >= 0.0 && pose_rotation_perturb_deg >= 0.0 && pose_translation_perturb >= 0.0,
            ErrorKind::kInvalidArgument, "noise magnitudes must be non-negative");
    require(outlier_fraction >= 0.0 && outlier_fraction < 0.5, ErrorKind::kInvalidArgument,
            "outlier fraction must lie in [0, 0.5)");
  }
};

namespace detail {

inline Mat3 look_at(const Vec3& center, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - center).normalized();
  Vec3 x = (-up).cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  return R;
}

inline Vec3 sample_in_ball(Rng& rng) {
  while (true) {
    Vec3 v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (v.squaredNorm() <= 1.0) return v;
  }
}

}  // namespace detail

/// Scene extent: radius of the bounding sphere around the point centroid.
inline double scene_extent(const std::vector<Vec3>& points) {
  if (points.empty()) return 1.0;
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  double r = 0.0;
  for (const auto& p : points) r = std::max(r, (p - c).norm());
  return r > 0.0 ? r : 1.0;
}

/// Random cameras looking at a point cloud normalized to unit bounding-sphere
/// radius. Every point is seen by at least two cameras.
inline Scene generate_scene(int n_cameras, int n_points, Layout layout, std::uint64_t seed,
                            const SceneOptions& opt = {}) {
  require(n_cameras >= 2, ErrorKind::kInvalidArgument, "need at least 2 cameras");
  require(n_points >= 8, ErrorKind::kInvalidArgument, "need at least 8 points");
  Scene scene;
  scene.seed = seed;
  scene.layout = layout;
  const Vec3 up(0, 1, 0);
  const auto K = CameraIntrinsics::centered(opt.focal, opt.image_width, opt.image_height);

  // Cameras.
  for (int i = 0; i < n_cameras; ++i) {
    Rng rng(seed, Stream::kCameraLayout, static_cast<std::uint64_t>(i));
    Vec3 center, target;
    switch (layout) {
      case Layout::kOrbit: {
        const double azimuth = 2.0 * std::numbers::pi * i / n_cameras + rng.uniform(-0.05, 0.05);
        const double elevation = deg2rad((i % 2 == 0 ? 15.0 : -10.0) + rng.uniform(-5.0, 5.0));
        const double dist = opt.camera_distance * rng.uniform(0.95, 1.05);
        center = dist * Vec3(std::cos(elevation) * std::cos(azimuth), std::sin(elevation),
                             std::cos(elevation) * std::sin(azimuth));
        target = 0.15 * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        break;
      }
      case Layout::kForward: {
        const double s = n_cameras > 1 ? static_cast<double>(i) / (n_cameras - 1) : 0.5;
        center = Vec3(-1.2 + 2.4 * s, 0.3 * rng.uniform(-1, 1), -opt.camera_distance + 0.3 * rng.uniform(-1, 1));
        target = Vec3(0.3 * rng.uniform(-1, 1), 0.3 * rng.uniform(-1, 1), 0.0);
        break;
      }
      case Layout::kRandom: {
        Vec3 dir = rng.unit_vector();
        if (std::abs(dir.y()) > 0.8) dir.y() *= 0.5;
        center = opt.camera_distance * rng.uniform(0.85, 1.15) * dir.normalized();
        target = 0.2 * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        break;
      }
    }
    scene.cameras.push_back({K, Pose::from_center(detail::look_at(center, target, up), center)});
  }

  // Points: sampled, normalized to unit extent, then visibility-checked.
  std::vector<Vec3> raw(n_points);
  for (int k = 0; k < n_points; ++k) {
    Rng rng(seed, Stream::kPointLayout, static_cast<std::uint64_t>(k));
    raw[k] = detail::sample_in_ball(rng);
    if (layout == Layout::kForward) raw[k].z() *= 0.4;
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : raw) centroid += p;
  centroid /= n_points;
  double radius = 0.0;
  for (const auto& p : raw) radius = std::max(radius, (p - centroid).norm());
  for (auto& p : raw) p = (p - centroid) / radius;

  const double cos_cone = std::cos(deg2rad(std::min(opt.visibility_cone_deg, 180.0)));
  auto visible_from = [&](const Vec3& X, const Vec3& normal, int cam, Vec2& px) {
    const auto& c = scene.cameras[cam];
    const Vec3 pc = c.pose.transform(X);
    if (pc.z() < 0.1) return false;
    px = c.intrinsics.apply(pc);
    if (px.x() < opt.margin_px || px.y() < opt.margin_px || px.x() > c.intrinsics.width - opt.margin_px ||
        px.y() > c.intrinsics.height - opt.margin_px)
      return false;
    if (opt.visibility_cone_deg >= 180.0) return true;
    return normal.dot((c.pose.center() - X).normalized()) >= cos_cone;
  };

  for (int k = 0; k < n_points; ++k) {
    Rng rng(seed, Stream::kPointLayout, (1ull << 32) + static_cast<std::uint64_t>(k));
    Vec3 X = raw[k];
    Track track;
    bool ok = false;
    for (int attempt = 0; attempt < opt.max_retries && !ok; ++attempt) {
      if (attempt > 0 && attempt % 20 == 0) {
        X = detail::sample_in_ball(rng);
        if (layout == Layout::kForward) X.z() *= 0.4;
      }
      const Vec3 normal = rng.unit_vector();
      track.observations.clear();
      for (int i = 0; i < n_cameras; ++i) {
        Vec2 px;
        if (visible_from(X, normal, i, px)) track.observations.push_back({i, px, k});
      }
      ok = track.observations.size() >= 2;
    }
    require(ok, ErrorKind::kInfeasibleLayout, "point " + std::to_string(k) + " not visible from two cameras");
    Rng color_rng(seed, Stream::kPointColor, static_cast<std::uint64_t>(k));
    const Vec3 color(color_rng.uniform(0.1, 0.9), color_rng.uniform(0.1, 0.9), color_rng.uniform(0.1, 0.9));
    track.id = k;
    track.point = X;
    track.color = color;
    scene.points.push_back({X, color});
    scene.tracks.push_back(std::move(track));
  }
  return scene;
}

struct CorruptedMatches {
  std::vector<PairMatches> pairs;  // sorted by (image_a, image_b)
  size_t total = 0;
  size_t outliers = 0;
  /// Noisy pixel of every ground-truth observation, keyed by (image, keypoint).
  std::map<std::pair<int, int>, Vec2> observed;
  /// Keypoint ids at or above this value are synthetic outliers.
  int first_outlier_keypoint = 0;
};

/// Co-visibility matches with Gaussian pixel noise per observation and an
/// exact (rounded) number of correspondences replaced by uniform random pixels
/// carrying fresh keypoint ids.
inline CorruptedMatches corrupt_observations(const Scene& scene, const NoiseSpec& spec) {
  spec.validate();
  CorruptedMatches out;
  for (const auto& track : scene.tracks) {
    for (const auto& o : track.observations) {
      Vec2 px = o.pixel;
      if (spec.pixel_sigma > 0.0) {
        Rng rng(spec.seed, Stream::kObservationNoise,
                (static_cast<std::uint64_t>(o.keypoint) << 20) | static_cast<std::uint64_t>(o.image));
        px += spec.pixel_sigma * Vec2(rng.normal(), rng.normal());
      }
      out.observed[{o.image, o.keypoint}] = px;
    }
  }
  std::map<std::pair<int, int>, PairMatches> by_pair;
  for (const auto& track : scene.tracks) {
    const auto& obs = track.observations;
    for (size_t a = 0; a < obs.size(); ++a) {
      for (size_t b = a + 1; b < obs.size(); ++b) {
        const auto& oa = obs[a].image < obs[b].image ? obs[a] : obs[b];
        const auto& ob = obs[a].image < obs[b].image ? obs[b] : obs[a];
        auto& pm = by_pair[{oa.image, ob.image}];
        pm.image_a = oa.image;
        pm.image_b = ob.image;
        pm.matches.push_back({oa.image, ob.image, out.observed[{oa.image, oa.keypoint}],
                              out.observed[{ob.image, ob.keypoint}], oa.keypoint, ob.keypoint});
        pm.is_outlier.push_back(false);
      }
    }
  }
  std::vector<std::pair<size_t, size_t>> index;  // (pair, match)
  for (auto& [key, pm] : by_pair) {
    const size_t p = out.pairs.size();
    for (size_t m = 0; m < pm.matches.size(); ++m) index.emplace_back(p, m);
    out.pairs.push_back(std::move(pm));
  }
  out.total = index.size();
  out.outliers = static_cast<size_t>(std::llround(spec.outlier_fraction * static_cast<double>(out.total)));
  out.first_outlier_keypoint = static_cast<int>(scene.points.size());
  Rng rng(spec.seed, Stream::kOutliers, 0);
  int next_keypoint = out.first_outlier_keypoint;
  for (size_t k = 0; k < out.outliers; ++k) {
    const size_t j = k + rng.index(index.size() - k);
    std::swap(index[k], index[j]);
    auto [p, m] = index[k];
    auto& match = out.pairs[p].matches[m];
    const auto& K = scene.cameras[match.image_b].intrinsics;
    match.point_b = Vec2(rng.uniform(0.0, K.width), rng.uniform(0.0, K.height));
    match.keypoint_b = next_keypoint++;
    out.pairs[p].is_outlier[m] = true;
  }
  return out;
}

/// Rotates every camera except camera 0 by exactly the requested angle about a
/// random axis and displaces its center by exactly the requested distance.
inline std::vector<Pose> perturb_poses(const Scene& scene, const NoiseSpec& spec) {
  spec.validate();
  std::vector<Pose> out;
  const double extent = scene_extent(scene.point_positions());
  for (size_t i = 0; i < scene.cameras.size(); ++i) {
    const Pose& gt = scene.cameras[i].pose;
    if (i == 0) {
      out.push_back(gt);
      continue;
    }
    Rng rng(spec.seed, Stream::kPosePerturbation, i);
    const Vec3 axis = rng.unit_vector();
    const Vec3 shift = rng.unit_vector();
    const Mat3 R = so3_exp(deg2rad(spec.pose_rotation_perturb_deg) * axis) * gt.rotation;
    const Vec3 c = gt.center() + spec.pose_translation_perturb * extent * shift;
    out.push_back(Pose::from_center(R, c));
  }
  return out;
}

struct AppearanceOptions {
  double opacity = 0.8;
  /// Each primitive sits this far (times scene extent) from its keypoint in a
  /// random direction: texture blobs are not centred on detected corners.
  /// 0.15 is ~2.5 px at the default 64 px render size.
  double center_offset = 0.15;
  std::uint64_t seed = 0;
};

/// Ground-truth appearance model: one primitive per scene point, nearest-
/// neighbour scale, given opacity, point color.
inline GaussianSet appearance_gaussians(const Scene& scene, const AppearanceOptions& opt = {}) {
  require(opt.opacity > 0.0 && opt.opacity < 1.0 && opt.center_offset >= 0.0, ErrorKind::kInvalidArgument,
          "invalid appearance options");
  auto gs = init_gaussians_from_points(scene.point_positions(), scene.point_colors(), 0);
  const double extent = scene_extent(scene.point_positions());
  for (size_t k = 0; k < gs.size(); ++k) {
    gs.opacity_logits[k] = logit(opt.opacity);
    if (opt.center_offset > 0.0) {
      Rng rng(opt.seed, Stream::kAppearance, k);
      gs.positions[k] += opt.center_offset * extent * rng.unit_vector();
    }
  }
  return gs;
}

/// Ground-truth images: the given primitives rendered from every camera's
/// true pose at the requested size.
inline std::vector<Image> render_reference_images(const Scene& scene, const GaussianSet& gaussians, int width,
                                                  int height, const RenderOptions& opt = {}) {
  std::vector<Image> out;
  out.reserve(scene.cameras.size());
  for (const auto& cam : scene.cameras) {
    out.push_back(render(gaussians, cam.intrinsics, cam.pose, width, height, opt).image);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json to_json(const CameraIntrinsics& K) {
  return {{"width", K.width}, {"height", K.height}, {"fx", K.focal_x}, {"fy", K.focal_y},
          {"cx", K.principal_point.x()}, {"cy", K.principal_point.y()}};
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  return {j.at("fx").get<double>(), j.at("fy").get<double>(), Vec2(j.at("cx").get<double>(), j.at("cy").get<double>()),
          j.at("width").get<int>(), j.at("height").get<int>()};
}

inline nlohmann::json to_json(const Pose& T) {
  std::vector<double> r(9), t(3);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r[i * 3 + k] = T.rotation(i, k);
    t[i] = T.translation[i];
  }
  return {{"rotation", r}, {"translation", t}};
}

inline Pose pose_from_json(const nlohmann::json& j) {
  Pose T;
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  require(r.size() == 9 && t.size() == 3, ErrorKind::kParse, "bad pose record");
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) T.rotation(i, k) = r[i * 3 + k];
    T.translation[i] = t[i];
  }
  return T;
}

inline nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
inline Vec3 vec3_from_json(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline nlohmann::json to_json(const Track& t) {
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : t.observations) obs.push_back({o.image, o.pixel.x(), o.pixel.y(), o.keypoint});
  nlohmann::json j = {{"id", t.id}, {"color", vec_json(t.color)}, {"observations", obs}};
  j["point"] = t.point ? vec_json(*t.point) : nlohmann::json(nullptr);
  return j;
}

inline Track track_from_json(const nlohmann::json& j) {
  Track t;
  t.id = j.at("id").get<int>();
  t.color = vec3_from_json(j.at("color"));
  if (!j.at("point").is_null()) t.point = vec3_from_json(j.at("point"));
  for (const auto& o : j.at("observations")) {
    t.observations.push_back({o.at(0).get<int>(), Vec2(o.at(1).get<double>(), o.at(2).get<double>()),
                              o.at(3).get<int>()});
  }
  return t;
}

}  // namespace detail

/// Scene file: a JSON document
///   {"format": "jsfm-scene", "version": 1, "seed": S, "layout": "orbit",
///    "cameras": [{"intrinsics": {...}, "pose": {"rotation": [9], "translation": [3]}}],
///    "points": [{"xyz": [3], "rgb": [3]}],
///    "tracks": [{"id": k, "point": [3] | null, "color": [3],
///                "observations": [[image, x, y, keypoint], ...]}]}
inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json cams = nlohmann::json::array(), pts = nlohmann::json::array(), trs = nlohmann::json::array();
  for (const auto& c : s.cameras) cams.push_back({{"intrinsics", detail::to_json(c.intrinsics)}, {"pose", detail::to_json(c.pose)}});
  for (const auto& p : s.points) pts.push_back({{"xyz", detail::vec_json(p.position)}, {"rgb", detail::vec_json(p.color)}});
  for (const auto& t : s.tracks) trs.push_back(detail::to_json(t));
  return {{"format", "jsfm-scene"}, {"version", 1},     {"seed", s.seed},  {"layout", to_string(s.layout)},
          {"cameras", cams},        {"points", pts},    {"tracks", trs}};
}

inline Scene scene_from_json(const nlohmann::json& j) {
  require(j.value("format", "") == "jsfm-scene", ErrorKind::kParse, "not a scene document");
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.layout = parse_layout(j.at("layout").get<std::string>());
  for (const auto& c : j.at("cameras"))
    s.cameras.push_back({detail::intrinsics_from_json(c.at("intrinsics")), detail::pose_from_json(c.at("pose"))});
  for (const auto& p : j.at("points"))
    s.points.push_back({detail::vec3_from_json(p.at("xyz")), detail::vec3_from_json(p.at("rgb"))});
  for (const auto& t : j.at("tracks")) s.tracks.push_back(detail::track_from_json(t));
  return s;
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path);
  out << j.dump(1) << "\n";
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, path + ": " + e.what());
  }
}

inline void save_scene(const Scene& s, const std::string& path) { write_json_file(scene_to_json(s), path); }
inline Scene load_scene(const std::string& path) { return scene_from_json(read_json_file(path)); }

}  // namespace jsfm

#pragma once

// End-to-end orchestration: input (synthetic or files) -> view graph ->
// rotation averaging -> tracks -> positioning -> filtered BA -> joint
// optimization -> evaluation, with artifacts written to one directory.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jsfm/bundle_adjustment.hpp"
#include "jsfm/colmap_io.hpp"
#include "jsfm/error.hpp"
#include "jsfm/image.hpp"
#include "jsfm/joint.hpp"
#include "jsfm/metrics.hpp"
#include "jsfm/parallel.hpp"
#include "jsfm/positioning.hpp"
#include "jsfm/rotation_averaging.hpp"
#include "jsfm/scene.hpp"
#include "jsfm/tracks.hpp"
#include "jsfm/viewgraph.hpp"

namespace jsfm {

enum class Stage { kFull, kSfm, kJoint };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::kFull: return "full";
    case Stage::kSfm: return "sfm";
    case Stage::kJoint: return "joint";
  }
  return "full";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "full") return Stage::kFull;
  if (s == "sfm") return Stage::kSfm;
  if (s == "joint") return Stage::kJoint;
  throw Error(ErrorKind::kInvalidArgument, "unknown stage: " + s);
}

struct PipelineConfig {
  std::uint64_t seed = 42;
  Stage stage = Stage::kFull;
  std::string output_dir = "out";
  std::string checkpoint;  // joint stage input; default <output_dir>/sfm_checkpoint.json
  int threads = 0;         // 0: JSFM_NUM_THREADS or hardware

  // Input: "synthetic" or "files" (scene JSON for intrinsics and ground truth,
  // match file, directory of image_%04d.png).
  std::string source = "synthetic";
  int cameras = 20;
  int points = 1000;
  Layout layout = Layout::kOrbit;
  double pixel_sigma = 0.5;
  double outlier_fraction = 0.1;
  SceneOptions scene;
  AppearanceOptions appearance;
  std::string scene_file;
  std::string matches_file;
  std::string images_dir;

  // SfM.
  int min_matches = 16;
  int min_inliers = 16;
  RansacOptions ransac = [] {
    RansacOptions r;
    r.threshold_px = 2.0;
    return r;
  }();
  RotationAveragingOptions rotation;
  PositioningOptions positioning;
  MergeOptions merge;  // merge_distance is a fraction of the point-cloud extent
  BAOptions ba;

  // Joint stage. The pose rate is 10x the long-schedule value because the
  // default run is 10x shorter.
  JointConfig joint = [] {
    JointConfig j;
    j.lr_pose = 1e-4;
    return j;
  }();
  int render_width = 64;
  int render_height = 64;
  int holdout_every = 8;
  int sh_degree = 0;

  std::string checkpoint_path() const {
    return checkpoint.empty() ? (std::filesystem::path(output_dir) / "sfm_checkpoint.json").string() : checkpoint;
  }

  void validate() const {
    require(source == "synthetic" || source == "files", ErrorKind::kInvalidArgument, "source must be synthetic or files");
    if (source == "files")
      require(!scene_file.empty() && !matches_file.empty() && !images_dir.empty(), ErrorKind::kInvalidArgument,
              "files input needs scene_file, matches_file and images_dir");
    require(cameras >= 2 && points >= 5, ErrorKind::kInvalidArgument, "synthetic scene too small");
    require(render_width > 0 && render_height > 0, ErrorKind::kInvalidArgument, "render size must be positive");
    require(holdout_every >= 2, ErrorKind::kInvalidArgument, "holdout_every must be >= 2");
    require(min_matches >= 5 && min_inliers >= 5, ErrorKind::kInvalidArgument, "match minimums must be >= 5");
    ba.validate();
    joint.validate();
  }
};

// ---------------------------------------------------------------------------
// Config JSON: every key optional, defaults above.

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["stage"] = to_string(c.stage);
  j["output_dir"] = c.output_dir;
  j["checkpoint"] = c.checkpoint;
  j["threads"] = c.threads;
  j["input"] = {{"source", c.source},
                {"cameras", c.cameras},
                {"points", c.points},
                {"layout", to_string(c.layout)},
                {"pixel_sigma", c.pixel_sigma},
                {"outlier_fraction", c.outlier_fraction},
                {"image_width", c.scene.image_width},
                {"image_height", c.scene.image_height},
                {"focal", c.scene.focal},
                {"camera_distance", c.scene.camera_distance},
                {"visibility_cone_deg", c.scene.visibility_cone_deg},
                {"appearance_opacity", c.appearance.opacity},
                {"appearance_offset", c.appearance.center_offset},
                {"scene_file", c.scene_file},
                {"matches_file", c.matches_file},
                {"images_dir", c.images_dir}};
  j["sfm"] = {{"min_matches", c.min_matches},
              {"min_inliers", c.min_inliers},
              {"ransac_threshold_px", c.ransac.threshold_px},
              {"ransac_max_iters", c.ransac.max_iters},
              {"ransac_confidence", c.ransac.confidence},
              {"use_eight_point", c.ransac.use_eight_point},
              {"low_parallax_deg", c.ransac.low_parallax_deg},
              {"merge_px", c.merge.merge_px},
              {"merge_distance", c.merge.merge_distance},
              {"ba_huber_delta", c.ba.huber_delta},
              {"ba_filter_thresholds", c.ba.filter_thresholds},
              {"ba_optimize_intrinsics", c.ba.optimize_intrinsics},
              {"ba_max_lm_iters", c.ba.max_lm_iters}};
  const auto& jc = c.joint;
  j["joint"] = {{"iterations", jc.iterations},
                {"batch_size", jc.batch_size},
                {"ablation", to_string(jc.ablation)},
                {"lambda_ba", jc.lambda_ba},
                {"huber_delta", jc.huber_delta},
                {"lambda_ssim", jc.lambda_ssim},
                {"lr_pose", jc.lr_pose},
                {"lr_position", jc.lr_position},
                {"lr_scale", jc.lr_scale},
                {"lr_rotation", jc.lr_rotation},
                {"lr_opacity", jc.lr_opacity},
                {"lr_sh", jc.lr_sh},
                {"lr_track", jc.lr_track},
                {"divergence_factor", jc.divergence_factor},
                {"checkpoint_every", jc.checkpoint_every},
                {"render_width", c.render_width},
                {"render_height", c.render_height},
                {"holdout_every", c.holdout_every},
                {"sh_degree", c.sh_degree}};
  return j;
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  auto get = [](const nlohmann::json& o, const char* key, auto& field) {
    if (o.contains(key)) field = o.at(key).get<std::decay_t<decltype(field)>>();
  };
  get(j, "seed", c.seed);
  if (j.contains("stage")) c.stage = parse_stage(j.at("stage").get<std::string>());
  get(j, "output_dir", c.output_dir);
  get(j, "checkpoint", c.checkpoint);
  get(j, "threads", c.threads);
  if (j.contains("input")) {
    const auto& i = j.at("input");
    get(i, "source", c.source);
    get(i, "cameras", c.cameras);
    get(i, "points", c.points);
    if (i.contains("layout")) c.layout = parse_layout(i.at("layout").get<std::string>());
    get(i, "pixel_sigma", c.pixel_sigma);
    get(i, "outlier_fraction", c.outlier_fraction);
    get(i, "image_width", c.scene.image_width);
    get(i, "image_height", c.scene.image_height);
    get(i, "focal", c.scene.focal);
    get(i, "camera_distance", c.scene.camera_distance);
    get(i, "visibility_cone_deg", c.scene.visibility_cone_deg);
    get(i, "appearance_opacity", c.appearance.opacity);
    get(i, "appearance_offset", c.appearance.center_offset);
    get(i, "scene_file", c.scene_file);
    get(i, "matches_file", c.matches_file);
    get(i, "images_dir", c.images_dir);
  }
  if (j.contains("sfm")) {
    const auto& s = j.at("sfm");
    get(s, "min_matches", c.min_matches);
    get(s, "min_inliers", c.min_inliers);
    get(s, "ransac_threshold_px", c.ransac.threshold_px);
    get(s, "ransac_max_iters", c.ransac.max_iters);
    get(s, "ransac_confidence", c.ransac.confidence);
    get(s, "use_eight_point", c.ransac.use_eight_point);
    get(s, "low_parallax_deg", c.ransac.low_parallax_deg);
    get(s, "merge_px", c.merge.merge_px);
    get(s, "merge_distance", c.merge.merge_distance);
    get(s, "ba_huber_delta", c.ba.huber_delta);
    get(s, "ba_filter_thresholds", c.ba.filter_thresholds);
    get(s, "ba_optimize_intrinsics", c.ba.optimize_intrinsics);
    get(s, "ba_max_lm_iters", c.ba.max_lm_iters);
  }
  if (j.contains("joint")) {
    const auto& o = j.at("joint");
    auto& jc = c.joint;
    get(o, "iterations", jc.iterations);
    get(o, "batch_size", jc.batch_size);
    if (o.contains("ablation")) jc.ablation = parse_ablation(o.at("ablation").get<std::string>());
    get(o, "lambda_ba", jc.lambda_ba);
    get(o, "huber_delta", jc.huber_delta);
    get(o, "lambda_ssim", jc.lambda_ssim);
    get(o, "lr_pose", jc.lr_pose);
    get(o, "lr_position", jc.lr_position);
    get(o, "lr_scale", jc.lr_scale);
    get(o, "lr_rotation", jc.lr_rotation);
    get(o, "lr_opacity", jc.lr_opacity);
    get(o, "lr_sh", jc.lr_sh);
    get(o, "lr_track", jc.lr_track);
    get(o, "divergence_factor", jc.divergence_factor);
    get(o, "checkpoint_every", jc.checkpoint_every);
    get(o, "render_width", c.render_width);
    get(o, "render_height", c.render_height);
    get(o, "holdout_every", c.holdout_every);
    get(o, "sh_degree", c.sh_degree);
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Input

struct PipelineInput {
  std::map<int, CameraIntrinsics> intrinsics;
  std::vector<Match> matches;
  std::vector<Image> images;  // by image id, at render size
  std::optional<Scene> scene;  // ground truth when known
  int first_outlier_keypoint = -1;  // -1: no outlier labels
  size_t planted_outliers = 0;
};

inline std::string image_file_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "image_%04d.png", id);
  return buf;
}

inline PipelineInput load_input(const PipelineConfig& c) {
  PipelineInput in;
  if (c.source == "synthetic") {
    Scene scene = generate_scene(c.cameras, c.points, c.layout, c.seed, c.scene);
    NoiseSpec noise;
    noise.pixel_sigma = c.pixel_sigma;
    noise.outlier_fraction = c.outlier_fraction;
    noise.seed = c.seed;
    const auto cm = corrupt_observations(scene, noise);
    for (const auto& p : cm.pairs) in.matches.insert(in.matches.end(), p.matches.begin(), p.matches.end());
    in.first_outlier_keypoint = cm.first_outlier_keypoint;
    in.planted_outliers = cm.outliers;
    AppearanceOptions app = c.appearance;
    app.seed = c.seed;
    RenderOptions ro;
    ro.threads = c.threads;
    for (auto& img : render_reference_images(scene, appearance_gaussians(scene, app), c.render_width,
                                             c.render_height, ro))
      in.images.push_back(quantize8(std::move(img)));
    in.scene = std::move(scene);
  } else {
    in.scene = load_scene(c.scene_file);
    in.matches = read_matches(c.matches_file);
    for (size_t i = 0; i < in.scene->cameras.size(); ++i) {
      const auto path = std::filesystem::path(c.images_dir) / image_file_name(static_cast<int>(i));
      Image img = std::filesystem::exists(path) ? read_image(path.string()) : Image{};
      if (img.size() > 0)
        require(img.width == c.render_width && img.height == c.render_height, ErrorKind::kInvalidArgument,
                path.string() + " does not match the render size");
      in.images.push_back(std::move(img));
    }
  }
  for (size_t i = 0; i < in.scene->cameras.size(); ++i) in.intrinsics[static_cast<int>(i)] = in.scene->cameras[i].intrinsics;
  return in;
}

/// synth: scene JSON, match file and reference images.
inline void write_input(const PipelineInput& in, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  if (in.scene) save_scene(*in.scene, (fs::path(dir) / "scene.json").string());
  write_matches(in.matches, (fs::path(dir) / "matches.txt").string());
  for (size_t i = 0; i < in.images.size(); ++i)
    if (in.images[i].size() > 0)
      write_png(in.images[i], (fs::path(dir) / "images" / image_file_name(static_cast<int>(i))).string());
}

// ---------------------------------------------------------------------------
// Stages

namespace detail {

template <class F>
auto run_stage(const char* name, std::map<std::string, double>* timings, F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      if (timings) (*timings)[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } else {
      auto r = fn();
      if (timings) (*timings)[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return r;
    }
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.message());
  }
}

/// Mean color of a track's observations in the (render-size) images.
inline Vec3 sample_color(const Track& t, const std::vector<Image>& images, const std::map<int, CameraIntrinsics>& K) {
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (const auto& o : t.observations) {
    if (o.image >= static_cast<int>(images.size()) || images[o.image].size() == 0) continue;
    const Image& img = images[o.image];
    const auto& k = K.at(o.image);
    const int x = static_cast<int>(std::floor(o.pixel.x() * img.width / k.width));
    const int y = static_cast<int>(std::floor(o.pixel.y() * img.height / k.height));
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
    sum += Vec3(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
    ++n;
  }
  return n ? Vec3(sum / n) : Vec3::Constant(0.5);
}

inline nlohmann::json summary_json(const Summary& s) { return {{"mean", s.mean}, {"median", s.median}, {"max", s.max}}; }

inline nlohmann::json pose_metrics(const std::vector<Pose>& est, const std::vector<Pose>& gt, double extent) {
  const auto rot = rotation_error(est, gt);
  const auto tr = ate(est, gt);
  return {{"rotation_error_deg", summary_json(rot.summary)},
          {"ate", {{"absolute", tr.rmse}, {"extent", tr.rmse / extent}}}};
}

}  // namespace detail

struct SfmStageResult {
  Reconstruction reconstruction;
  std::vector<BARoundStats> rounds;
  nlohmann::json metrics;
};

/// View graph through filtered BA.
inline SfmStageResult run_sfm_stage(const PipelineConfig& c, const PipelineInput& in,
                                    std::map<std::string, double>* timings = nullptr) {
  const int threads = c.threads > 0 ? c.threads : num_threads();
  ViewGraphStats vg_stats;
  ViewGraph g = detail::run_stage("view_graph", timings, [&] {
    RansacOptions r = c.ransac;
    r.seed = c.seed;
    return estimate_view_graph_geometry(build_view_graph(in.matches, c.min_matches), in.intrinsics, r,
                                        c.min_inliers, &vg_stats, threads);
  });
  const auto rot = detail::run_stage("rotation_averaging", timings, [&] { return average_rotations(g, c.rotation); });
  std::vector<Track> tracks = detail::run_stage("tracks", timings, [&] { return build_tracks(g); });
  const size_t tracks_built = tracks.size();
  const auto pos = detail::run_stage("positioning", timings, [&] {
    std::map<int, CameraIntrinsics> K;
    for (int v : g.vertices) K[v] = in.intrinsics.at(v);
    PositioningOptions po = c.positioning;
    po.threads = threads;
    return solve_positions(rot.rotations, tracks, K, relative_directions(g), po);
  });

  Reconstruction rec = detail::run_stage("track_merge", timings, [&] {
    Reconstruction r;
    for (const auto& [i, T] : pos.poses) {
      r.poses[i] = T;
      r.intrinsics[i] = in.intrinsics.at(i);
    }
    const int n_img = r.poses.rbegin()->first + 1;
    std::vector<Pose> P(n_img, Pose::identity());
    std::vector<CameraIntrinsics> K(n_img, CameraIntrinsics::centered(1, 1, 1));
    for (const auto& [i, T] : r.poses) {
      P[i] = T;
      K[i] = r.intrinsics.at(i);
    }
    std::vector<Vec3> pts;
    for (const auto& t : pos.tracks) pts.push_back(*t.point);
    MergeOptions mo = c.merge;
    mo.merge_distance *= scene_extent(pts);
    r.tracks = merge_tracks(pos.tracks, P, K, mo);
    for (auto& t : r.tracks) t.color = detail::sample_color(t, in.images, in.intrinsics);
    return r;
  });

  BAOptions bo = c.ba;
  bo.threads = threads;
  const auto ba = detail::run_stage("bundle_adjustment", timings, [&] { return iterate_ba_with_filtering(rec, bo); });

  SfmStageResult out;
  out.reconstruction = ba.reconstruction;
  out.rounds = ba.rounds;
  const auto& R = out.reconstruction;
  nlohmann::json m;
  m["view_graph"] = {{"edges", g.edges.size()},
                     {"input_pairs", vg_stats.input_edges},
                     {"failed_pairs", vg_stats.failed_edges},
                     {"weak_pairs", vg_stats.weak_edges},
                     {"low_parallax_pairs", vg_stats.low_parallax_edges}};
  m["cameras_registered"] = R.poses.size();
  m["tracks_built"] = tracks_built;
  m["tracks_positioned"] = pos.tracks.size();
  m["tracks_final"] = R.tracks.size();
  m["observations_final"] = R.observation_count();
  m["observations_filtered"] = ba.total_filtered;
  m["reprojection_rms_px"] = reprojection_rms(R);
  m["ba_rounds"] = nlohmann::json::array();
  for (const auto& r : ba.rounds)
    m["ba_rounds"].push_back({{"round", r.round},
                              {"threshold_px", r.threshold},
                              {"observations", r.observations},
                              {"filtered", r.filtered},
                              {"tracks_removed", r.tracks_removed},
                              {"rms_px", r.rms_px},
                              {"rms_after_filter_px", r.rms_after_filter_px},
                              {"lm_iterations", r.lm_iterations}});
  if (in.first_outlier_keypoint >= 0) {
    size_t surviving = 0;
    for (const auto& t : R.tracks)
      for (const auto& o : t.observations) surviving += o.keypoint >= in.first_outlier_keypoint;
    m["outliers_planted"] = in.planted_outliers;
    m["outlier_observations_surviving"] = surviving;
  }
  if (in.scene) {
    std::vector<Pose> est, gt;
    for (const auto& [i, T] : R.poses) {
      est.push_back(T);
      gt.push_back(in.scene->cameras[i].pose);
    }
    if (est.size() >= 3) m.update(detail::pose_metrics(est, gt, scene_extent(in.scene->point_positions())));
  }
  out.metrics = std::move(m);
  return out;
}

/// Joint-stage starting point, with cameras renumbered densely.
struct JointSetup {
  JointState state;
  std::vector<int> image_ids;  // local index -> image id
};

inline JointSetup make_joint_setup(const Reconstruction& rec, int sh_degree) {
  JointSetup s;
  s.image_ids = rec.camera_ids();
  std::map<int, int> local;
  std::vector<Pose> poses;
  std::vector<CameraIntrinsics> K;
  for (size_t l = 0; l < s.image_ids.size(); ++l) {
    local[s.image_ids[l]] = static_cast<int>(l);
    poses.push_back(rec.poses.at(s.image_ids[l]));
    K.push_back(rec.intrinsics.at(s.image_ids[l]));
  }
  std::vector<Track> tracks = rec.tracks;
  for (auto& t : tracks)
    for (auto& o : t.observations) o.image = local.at(o.image);
  const int anchor = local.at(choose_gauge(rec).anchor);
  s.state = init_joint_state(poses, K, tracks, sh_degree, anchor);
  return s;
}

inline Reconstruction reconstruction_from_state(const JointState& s, const std::vector<int>& image_ids) {
  Reconstruction r;
  for (int l = 0; l < s.camera_count(); ++l) {
    r.poses[image_ids[l]] = s.pose(l);
    r.intrinsics[image_ids[l]] = s.intrinsics[l];
  }
  for (size_t k = 0; k < s.tracks.size(); ++k) {
    Track t = s.tracks[k];
    t.point = s.track_points[k];
    for (auto& o : t.observations) o.image = image_ids[o.image];
    r.tracks.push_back(std::move(t));
  }
  return r;
}

inline nlohmann::json checkpoint_json(const JointSetup& s, const nlohmann::json& sfm_metrics) {
  return {{"image_ids", s.image_ids}, {"state", joint_state_to_json(s.state)}, {"sfm_metrics", sfm_metrics}};
}

/// Either checkpoint kind; a bare state gets image ids 0..n-1.
inline JointSetup load_joint_checkpoint(const std::string& path) {
  const auto j = read_json_file(path);
  JointSetup s;
  s.state = joint_state_from_json(j.contains("state") ? j.at("state") : j);
  if (j.contains("image_ids"))
    s.image_ids = j.at("image_ids").get<std::vector<int>>();
  else
    for (int l = 0; l < s.state.camera_count(); ++l) s.image_ids.push_back(l);
  require(static_cast<int>(s.image_ids.size()) == s.state.camera_count(), ErrorKind::kIo, path + ": image_ids size mismatch");
  return s;
}

struct JointStageResult {
  JointResult result;
  JointMetrics evaluation;
  std::vector<int> train, held_out;  // local indices
  nlohmann::json metrics;
};

inline JointStageResult run_joint_stage(const PipelineConfig& c, const PipelineInput& in, const JointSetup& setup,
                                        std::map<std::string, double>* timings = nullptr) {
  JointStageResult out;
  std::vector<Image> images;
  std::vector<Pose> gt;
  for (size_t l = 0; l < setup.image_ids.size(); ++l) {
    const int id = setup.image_ids[l];
    images.push_back(id < static_cast<int>(in.images.size()) ? in.images[id] : Image{});
    if (in.scene) gt.push_back(in.scene->cameras[id].pose);
    if (id % c.holdout_every == 0)
      out.held_out.push_back(static_cast<int>(l));
    else if (images.back().size() > 0)
      out.train.push_back(static_cast<int>(l));
  }
  require(!out.train.empty(), ErrorKind::kInvalidArgument, "no training images");
  JointConfig jc = c.joint;
  jc.seed = c.seed;
  jc.render.threads = c.threads;
  out.result = detail::run_stage("joint", timings, [&] { return joint_optimize(setup.state, images, out.train, jc); });
  std::vector<int> eval_cams;
  for (int l : out.held_out)
    if (images[l].size() > 0) eval_cams.push_back(l);
  out.evaluation = detail::run_stage("evaluation", timings, [&] {
    return evaluate_state(out.result.state, images, eval_cams, gt.size() >= 3 ? gt : std::vector<Pose>{}, jc.render);
  });

  const auto& e = out.evaluation;
  nlohmann::json m;
  m["ablation"] = to_string(jc.ablation);
  m["iterations"] = jc.iterations;
  m["gaussians"] = out.result.state.gaussians.size();
  m["train_images"] = out.train.size();
  m["held_out_images"] = eval_cams.size();
  m["psnr_db"] = e.psnr;
  m["ssim"] = e.ssim;
  m["per_image"] = nlohmann::json::array();
  for (const auto& im : e.images)
    m["per_image"].push_back({{"image", setup.image_ids[im.camera]}, {"psnr_db", im.psnr}, {"ssim", im.ssim}});
  if (!out.result.trace.empty()) {
    const auto& last = out.result.trace.back();
    m["final_loss"] = {{"L_photo", last.photo}, {"L_BA", last.ba}, {"total", last.total}};
  }
  m["reprojection_rms_px"] = reprojection_rms(reconstruction_from_state(out.result.state, setup.image_ids));
  if (e.rotation) {
    m["rotation_error_deg"] = detail::summary_json(e.rotation->summary);
    const double extent = scene_extent(in.scene->point_positions());
    m["ate"] = {{"absolute", e.trajectory->rmse}, {"extent", e.trajectory->rmse / extent}};
  }
  out.metrics = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------

struct PipelineResult {
  nlohmann::json metrics;
  std::map<std::string, double> timings;  // seconds; kept out of metrics so those stay reproducible
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot write " + path);
  f << text;
}

inline void write_ba_rounds_csv(const std::vector<BARoundStats>& rounds, const std::string& path) {
  std::string s = "round,threshold_px,observations,filtered,tracks_removed,rms_px,rms_after_filter_px,lm_iterations\n";
  char buf[256];
  for (const auto& r : rounds) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%d,%d,%.17g,%.17g,%d\n", r.round, r.threshold, r.observations,
                  r.filtered, r.tracks_removed, r.rms_px, r.rms_after_filter_px, r.lm_iterations);
    s += buf;
  }
  write_text(path, s);
}

/// Headline numbers: the latest stage's values.
inline nlohmann::json assemble_metrics(const nlohmann::json& sfm, const nlohmann::json* joint) {
  nlohmann::json m;
  m["sfm"] = sfm;
  const nlohmann::json& last = joint ? *joint : sfm;
  if (joint) {
    m["joint"] = *joint;
    m["psnr_db"] = joint->at("psnr_db");
    m["ssim"] = joint->at("ssim");
  }
  m["reprojection_rms_px"] = last.at("reprojection_rms_px");
  if (last.contains("rotation_error_deg")) {
    m["rotation_error_deg"] = last.at("rotation_error_deg");
    m["ate"] = last.at("ate");
  }
  return m;
}

/// Runs the configured stages and writes artifacts into output_dir:
/// config.json, sfm/ and joint/ (COLMAP text), sfm_checkpoint.json,
/// joint_checkpoint.json, ba_rounds.csv, loss_trace.csv, renders/,
/// metrics.json, timings.json.
inline PipelineResult run_pipeline(const PipelineConfig& c) {
  namespace fs = std::filesystem;
  c.validate();
  const fs::path out = c.output_dir;
  fs::create_directories(out);
  write_json_file(config_to_json(c), (out / "config.json").string());
  PipelineResult res;

  const PipelineInput in = detail::run_stage("input", &res.timings, [&] { return load_input(c); });

  JointSetup setup;
  nlohmann::json sfm_metrics;
  if (c.stage == Stage::kJoint) {
    setup = detail::run_stage("checkpoint", &res.timings, [&] { return load_joint_checkpoint(c.checkpoint_path()); });
    sfm_metrics = read_json_file(c.checkpoint_path()).value("sfm_metrics", nlohmann::json::object());
  } else {
    const auto sfm = run_sfm_stage(c, in, &res.timings);
    sfm_metrics = sfm.metrics;
    export_colmap_text(sfm.reconstruction, (out / "sfm").string());
    write_ba_rounds_csv(sfm.rounds, (out / "ba_rounds.csv").string());
    setup = detail::run_stage("gaussian_init", &res.timings,
                              [&] { return make_joint_setup(sfm.reconstruction, c.sh_degree); });
    write_json_file(checkpoint_json(setup, sfm_metrics), (out / "sfm_checkpoint.json").string());
  }

  if (c.stage == Stage::kSfm) {
    res.metrics = assemble_metrics(sfm_metrics, nullptr);
  } else {
    PipelineConfig cj = c;
    if (c.joint.checkpoint_every > 0) cj.joint.checkpoint_path = (out / "joint_checkpoint.json").string();
    const auto j = run_joint_stage(cj, in, setup, &res.timings);
    write_loss_trace(j.result.trace, (out / "loss_trace.csv").string());
    write_json_file(checkpoint_json({j.result.state, setup.image_ids}, sfm_metrics), (out / "joint_checkpoint.json").string());
    export_colmap_text(reconstruction_from_state(j.result.state, setup.image_ids), (out / "joint").string());
    fs::create_directories(out / "renders");
    for (const auto& im : j.evaluation.images) {
      const auto& s = j.result.state;
      const Image r = render(s.gaussians, s.intrinsics[im.camera], s.pose(im.camera), c.render_width,
                             c.render_height, cj.joint.render)
                          .image;
      write_png(r, (out / "renders" / image_file_name(setup.image_ids[im.camera])).string());
    }
    res.metrics = assemble_metrics(sfm_metrics, &j.metrics);
  }
  write_text((out / "metrics.json").string(), res.metrics.dump(2) + "\n");
  nlohmann::json t(res.timings);
  write_text((out / "timings.json").string(), t.dump(2) + "\n");
  return res;
}

}  // namespace jsfm

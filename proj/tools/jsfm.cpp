// Command-line front end. Every subcommand takes the same base options:
//   --config FILE   JSON config (all keys optional)
//   --seed N        overrides config seed
//   --ablation M    full | frozen-poses | photometric-only | merged-tracks
//   --stage S       full | sfm | joint (pipeline only)
//   --out DIR       output directory
// JSFM_NUM_THREADS sets the worker count.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "jsfm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace jsfm;

namespace {

struct BaseOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string ablation;
  std::string stage;
  std::string out;
};

void add_base(CLI::App* app, BaseOptions& o, bool with_stage) {
  app->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--ablation", o.ablation, "joint-stage mode")
      ->check(CLI::IsMember({"full", "frozen-poses", "photometric-only", "merged-tracks"}));
  if (with_stage) app->add_option("--stage", o.stage, "stages to run")->check(CLI::IsMember({"full", "sfm", "joint"}));
  app->add_option("--out", o.out, "output directory");
}

PipelineConfig resolve(const BaseOptions& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.ablation.empty()) c.joint.ablation = parse_ablation(o.ablation);
  if (!o.stage.empty()) c.stage = parse_stage(o.stage);
  if (!o.out.empty()) c.output_dir = o.out;
  return c;
}

void print_metrics(const nlohmann::json& m) { std::cout << m.dump(2) << "\n"; }

int run_synth(const PipelineConfig& c) {
  c.validate();
  const auto in = load_input(c);
  write_input(in, c.output_dir);
  nlohmann::json m = {{"cameras", in.intrinsics.size()},
                      {"matches", in.matches.size()},
                      {"outliers_planted", in.planted_outliers},
                      {"first_outlier_keypoint", in.first_outlier_keypoint}};
  print_metrics(m);
  return 0;
}

// Re-evaluates a joint checkpoint on the held-out split of the configured input.
int run_eval(PipelineConfig c, const std::string& checkpoint) {
  c.validate();
  const auto path = checkpoint.empty() ? (fs::path(c.output_dir) / "joint_checkpoint.json").string() : checkpoint;
  const auto setup = load_joint_checkpoint(path);
  const auto in = load_input(c);
  std::vector<Image> images;
  std::vector<Pose> gt;
  std::vector<int> held_out;
  for (size_t l = 0; l < setup.image_ids.size(); ++l) {
    const int id = setup.image_ids[l];
    images.push_back(id < static_cast<int>(in.images.size()) ? in.images[id] : Image{});
    if (in.scene) gt.push_back(in.scene->cameras[id].pose);
    if (id % c.holdout_every == 0 && images.back().size() > 0) held_out.push_back(static_cast<int>(l));
  }
  RenderOptions ro = c.joint.render;
  ro.threads = c.threads;
  const auto e = evaluate_state(setup.state, images, held_out, gt.size() >= 3 ? gt : std::vector<Pose>{}, ro);
  nlohmann::json m = {{"checkpoint", path}, {"psnr_db", e.psnr}, {"ssim", e.ssim}};
  m["per_image"] = nlohmann::json::array();
  for (const auto& im : e.images)
    m["per_image"].push_back({{"image", setup.image_ids[im.camera]}, {"psnr_db", im.psnr}, {"ssim", im.ssim}});
  if (e.rotation) {
    const double extent = scene_extent(in.scene->point_positions());
    m["rotation_error_deg"] = {{"mean", e.rotation->summary.mean},
                               {"median", e.rotation->summary.median},
                               {"max", e.rotation->summary.max}};
    m["ate"] = {{"absolute", e.trajectory->rmse}, {"extent", e.trajectory->rmse / extent}};
  }
  fs::create_directories(c.output_dir);
  write_text((fs::path(c.output_dir) / "eval.json").string(), m.dump(2) + "\n");
  print_metrics(m);
  return 0;
}

int run_export(const PipelineConfig& c, std::string checkpoint, std::string dest) {
  if (checkpoint.empty()) {
    checkpoint = (fs::path(c.output_dir) / "joint_checkpoint.json").string();
    if (!fs::exists(checkpoint)) checkpoint = (fs::path(c.output_dir) / "sfm_checkpoint.json").string();
  }
  if (dest.empty()) dest = (fs::path(c.output_dir) / "colmap").string();
  const auto setup = load_joint_checkpoint(checkpoint);
  export_colmap_text(reconstruction_from_state(setup.state, setup.image_ids), dest);
  std::cout << "wrote " << dest << " from " << checkpoint << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global SfM with joint Gaussian-splatting refinement"};
  app.require_subcommand(1);

  BaseOptions synth_o, sfm_o, joint_o, eval_o, export_o, pipe_o;
  std::string eval_ckpt, export_ckpt, export_dest;
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene, matches and reference images");
  add_base(synth, synth_o, false);
  auto* sfm = app.add_subcommand("sfm", "view graph through filtered bundle adjustment");
  add_base(sfm, sfm_o, false);
  auto* joint = app.add_subcommand("joint", "joint optimization from an SfM checkpoint");
  add_base(joint, joint_o, false);
  auto* eval = app.add_subcommand("eval", "held-out PSNR/SSIM and pose error of a checkpoint");
  add_base(eval, eval_o, false);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint (default <out>/joint_checkpoint.json)");
  auto* exp = app.add_subcommand("export", "write a checkpoint as COLMAP text");
  add_base(exp, export_o, false);
  exp->add_option("--checkpoint", export_ckpt, "checkpoint (default: joint, else sfm, in <out>)");
  exp->add_option("--dest", export_dest, "destination directory (default <out>/colmap)");
  auto* pipe = app.add_subcommand("pipeline", "run the configured stages end to end");
  add_base(pipe, pipe_o, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(resolve(synth_o));
    if (*eval) return run_eval(resolve(eval_o), eval_ckpt);
    if (*exp) return run_export(resolve(export_o), export_ckpt, export_dest);
    PipelineConfig c;
    if (*sfm) {
      c = resolve(sfm_o);
      c.stage = Stage::kSfm;
    } else if (*joint) {
      c = resolve(joint_o);
      c.stage = Stage::kJoint;
    } else {
      c = resolve(pipe_o);
    }
    print_metrics(run_pipeline(c).metrics);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

#pragma once

// Finite-difference oracles shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "jsfm/rng.hpp"
#include "jsfm/splat.hpp"

namespace jsfm::oracle {

/// Tracks the worst relative error between analytic and numeric gradients.
/// Components whose magnitude is below `floor` are compared against the floor
/// instead, so round-off on vanishing components does not dominate.
struct GradCheck {
  double worst = 0.0;
  std::string worst_label;
  int checked = 0;

  void add(double analytic, double numeric, double floor, const std::string& label) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++checked;
    if (rel > worst) {
      worst = rel;
      worst_label = label;
    }
  }
};

inline double central_difference(const std::function<double(double)>& f, double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

struct SplatGradScene {
  GaussianSet gaussians;
  CameraIntrinsics K;
  Pose pose;
  Image target;
};

/// A handful of anisotropic primitives in front of a small camera, and a
/// target rendered from a different random set plus noise.
inline SplatGradScene make_splat_grad_scene(std::uint64_t seed, int sh_degree = 0, int count = 8) {
  Rng rng(seed, Stream::kTest, 17);
  SplatGradScene s;
  s.K = CameraIntrinsics::centered(36.0, 32, 32);
  s.pose = Pose{so3_exp(Vec3(rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1))),
                Vec3(rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1))};
  auto make_set = [&](GaussianSet& gs) {
    gs.sh_degree = sh_degree;
    for (int i = 0; i < count; ++i) {
      const Vec3 cam(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(2.0, 3.5));
      gs.add(s.pose.inverse().transform(cam), std::log(rng.uniform(0.08, 0.25)), rng.uniform(0.2, 0.8),
             Vec3(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)));
      gs.log_scales.back() += Vec3(rng.normal(0, 0.3), rng.normal(0, 0.3), rng.normal(0, 0.3));
      gs.rotations.back() = Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized() *
                            rng.uniform(0.8, 1.2);
      for (int k = 3; k < gs.sh_stride(); ++k) gs.sh[i * gs.sh_stride() + k] = rng.normal(0, 0.2);
    }
  };
  make_set(s.gaussians);
  GaussianSet other;
  make_set(other);
  s.target = render(other, s.K, s.pose, s.K.width, s.K.height, RenderOptions::smooth()).image;
  for (auto& v : s.target.data) v = std::clamp(v + rng.normal(0, 0.05), 0.0, 1.0);
  return s;
}

/// Compares render_with_gradients against central differences for every
/// primitive parameter and all six pose twist components. The step is small
/// because the L1 term has kinks wherever a residual crosses zero.
inline GradCheck check_splat_gradients(const SplatGradScene& s, double lambda_ssim, double h = 1e-6) {
  const auto opt = RenderOptions::smooth();
  const auto grads = render_with_gradients(s.gaussians, s.K, s.pose, s.target, lambda_ssim, opt);
  auto loss_of = [&](const GaussianSet& gs, const Pose& T) {
    const auto img = render(gs, s.K, T, s.target.width, s.target.height, opt).image;
    return photometric_loss(img, s.target, lambda_ssim, false).loss;
  };
  double scale = 0.0;
  for (size_t i = 0; i < s.gaussians.size(); ++i) {
    scale = std::max({scale, grads.positions[i].cwiseAbs().maxCoeff(), grads.log_scales[i].cwiseAbs().maxCoeff(),
                      grads.rotations[i].cwiseAbs().maxCoeff(), std::abs(grads.opacity_logits[i])});
  }
  for (double g : grads.sh) scale = std::max(scale, std::abs(g));
  scale = std::max(scale, grads.pose.cwiseAbs().maxCoeff());
  const double floor = 1e-4 * scale;

  GradCheck check;
  for (size_t i = 0; i < s.gaussians.size(); ++i) {
    const std::string tag = "g" + std::to_string(i);
    for (int k = 0; k < 3; ++k) {
      check.add(grads.positions[i][k], central_difference([&](double d) {
        GaussianSet gs = s.gaussians; gs.positions[i][k] += d; return loss_of(gs, s.pose); }, h), floor, tag + ".mu");
      check.add(grads.log_scales[i][k], central_difference([&](double d) {
        GaussianSet gs = s.gaussians; gs.log_scales[i][k] += d; return loss_of(gs, s.pose); }, h), floor, tag + ".scale");
    }
    for (int k = 0; k < 4; ++k) {
      check.add(grads.rotations[i][k], central_difference([&](double d) {
        GaussianSet gs = s.gaussians; gs.rotations[i][k] += d; return loss_of(gs, s.pose); }, h), floor, tag + ".quat");
    }
    check.add(grads.opacity_logits[i], central_difference([&](double d) {
      GaussianSet gs = s.gaussians; gs.opacity_logits[i] += d; return loss_of(gs, s.pose); }, h), floor, tag + ".opacity");
    for (int k = 0; k < s.gaussians.sh_stride(); ++k) {
      const size_t idx = i * s.gaussians.sh_stride() + k;
      check.add(grads.sh[idx], central_difference([&](double d) {
        GaussianSet gs = s.gaussians; gs.sh[idx] += d; return loss_of(gs, s.pose); }, h), floor, tag + ".sh");
    }
  }
  for (int k = 0; k < 6; ++k) {
    check.add(grads.pose[k], central_difference([&](double d) {
      return loss_of(s.gaussians, se3_exp(Vec6::Unit(k) * d) * s.pose); }, h), floor, "pose" + std::to_string(k));
  }
  return check;
}

}  // namespace jsfm::oracle

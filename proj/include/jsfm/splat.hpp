#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

#include "jsfm/error.hpp"
#include "jsfm/geometry.hpp"
#include "jsfm/image.hpp"
#include "jsfm/parallel.hpp"
#include "jsfm/sh.hpp"

namespace jsfm {

using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Opacity assigned to freshly initialized primitives.
inline constexpr double kInitialOpacity = 0.1;
inline constexpr int kInitNeighbors = 4;

/// Structure-of-arrays set of 3D Gaussian primitives.
struct GaussianSet {
  int sh_degree = 0;
  std::vector<Vec3> positions;
  std::vector<Vec3> log_scales;
  std::vector<Vec4> rotations;  // quaternion (w, x, y, z), normalized on use
  std::vector<double> opacity_logits;
  std::vector<double> sh;  // per primitive: coefficient_count(sh_degree) x RGB

  size_t size() const { return positions.size(); }
  int sh_stride() const { return 3 * sh::coefficient_count(sh_degree); }
  double opacity(size_t i) const { return sigmoid(opacity_logits[i]); }

  /// View-independent (DC) color.
  Vec3 base_color(size_t i) const {
    const double* c = &sh[i * sh_stride()];
    return Vec3(c[0], c[1], c[2]) * sh::kC0 + Vec3::Constant(0.5);
  }

  void add(const Vec3& position, double log_scale, double opacity, const Vec3& rgb) {
    positions.push_back(position);
    log_scales.push_back(Vec3::Constant(log_scale));
    rotations.push_back(Vec4(1, 0, 0, 0));
    opacity_logits.push_back(logit(opacity));
    const size_t offset = sh.size();
    sh.resize(offset + sh_stride(), 0.0);
    for (int c = 0; c < 3; ++c) sh[offset + c] = (rgb[c] - 0.5) / sh::kC0;
  }
};

/// Isotropic primitives at the given points: scale is the mean distance to the
/// four nearest neighbours, identity rotation, opacity 0.1, DC color from RGB.
inline GaussianSet init_gaussians_from_points(const std::vector<Vec3>& points, const std::vector<Vec3>& colors,
                                              int sh_degree = 0) {
  require(points.size() > static_cast<size_t>(kInitNeighbors), ErrorKind::kTooFewPoints,
          "need at least 5 points to initialize Gaussians");
  require(colors.size() == points.size(), ErrorKind::kInvalidArgument, "one color per point required");
  require(sh_degree >= 0 && sh_degree <= 3, ErrorKind::kInvalidArgument, "SH degree must be in [0, 3]");
  GaussianSet gs;
  gs.sh_degree = sh_degree;
  const size_t n = points.size();
  std::vector<double> nearest(kInitNeighbors);
  for (size_t i = 0; i < n; ++i) {
    std::fill(nearest.begin(), nearest.end(), std::numeric_limits<double>::infinity());
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (points[i] - points[j]).norm();
      if (d < nearest.back()) {
        nearest.back() = d;
        std::sort(nearest.begin(), nearest.end());
      }
    }
    const double mean = std::accumulate(nearest.begin(), nearest.end(), 0.0) / kInitNeighbors;
    gs.add(points[i], std::log(std::max(mean, 1e-9)), kInitialOpacity, colors[i]);
  }
  return gs;
}

struct RenderOptions {
  double sigma_cutoff = 3.0;       // bounding box half-size in standard deviations
  double min_alpha = 1.0 / 255.0;  // weaker contributions are skipped
  double max_alpha = 0.99;
  double min_transmittance = 1e-4;
  double near_plane = 0.01;
  double dilation = 0.3;  // added to the 2D covariance diagonal, pixels^2
  int threads = 0;        // 0 selects num_threads()

  /// Settings without hard cutoffs, for finite-difference checks.
  static RenderOptions smooth() {
    RenderOptions o;
    o.sigma_cutoff = 1e6;
    o.min_alpha = 0.0;
    o.min_transmittance = 0.0;
    return o;
  }
};

struct RenderedImage {
  Image image;
  std::vector<double> transmittance;  // per pixel, after compositing
};

struct RenderGradients {
  double loss = 0.0;
  double l1 = 0.0;
  double ssim = 1.0;
  Image rendered;
  std::vector<Vec3> positions;
  std::vector<Vec3> log_scales;
  std::vector<Vec4> rotations;
  std::vector<double> opacity_logits;
  std::vector<double> sh;
  Vec6 pose = Vec6::Zero();  // left twist at the rendered pose
};

namespace detail {

struct Projected {
  bool visible = false;
  double depth = 0.0;
  Vec3 p_cam;
  Vec2 mean;
  Mat2 conic;
  double opacity = 0.0;
  Vec3 color;
  Vec3 color_unclamped;
  Vec3 view_dir;  // world-space unit direction camera center -> primitive
  double view_dist = 0.0;
  Mat3 rot;        // primitive rotation
  Vec3 scale;      // exp(log_scale)
  Mat3 sigma_cam;  // camera-frame covariance
  Mat23 jac;       // d mean / d p_cam
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // inclusive-exclusive pixel box
};

inline Mat3 quaternion_matrix(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

/// d L / d q for unit q given G = d L / d R.
inline Vec4 quaternion_matrix_vjp(const Vec4& q, const Mat3& G) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 dw, dx, dy, dz;
  dw << 0, -z, y, z, 0, -x, -y, x, 0;
  dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  return 2.0 * Vec4((G.array() * dw.array()).sum(), (G.array() * dx.array()).sum(),
                    (G.array() * dy.array()).sum(), (G.array() * dz.array()).sum());
}

inline Projected project_gaussian(const GaussianSet& gs, size_t i, const CameraIntrinsics& K, const Pose& T,
                                  const Vec3& camera_center, int width, int height, const RenderOptions& opt) {
  Projected g;
  g.p_cam = T.transform(gs.positions[i]);
  g.depth = g.p_cam.z();
  if (!(g.depth > opt.near_plane)) return g;
  const double z = g.depth;
  const double fx = K.focal_x, fy = K.focal_y;
  g.mean = Vec2(fx * g.p_cam.x() / z + K.principal_point.x(), fy * g.p_cam.y() / z + K.principal_point.y());
  g.jac << fx / z, 0.0, -fx * g.p_cam.x() / (z * z), 0.0, fy / z, -fy * g.p_cam.y() / (z * z);

  const Vec4 qn = gs.rotations[i].normalized();
  g.rot = quaternion_matrix(qn);
  g.scale = gs.log_scales[i].array().exp();
  const Mat3 M = g.rot * g.scale.asDiagonal();
  g.sigma_cam = T.rotation * (M * M.transpose()) * T.rotation.transpose();
  Mat2 cov = g.jac * g.sigma_cam * g.jac.transpose();
  cov(0, 0) += opt.dilation;
  cov(1, 1) += opt.dilation;
  const double det = cov.determinant();
  if (!(det > 0.0)) return g;
  g.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;

  const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
  const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
  const double radius = std::ceil(opt.sigma_cutoff * std::sqrt(lambda_max));
  g.x0 = static_cast<int>(std::max(0.0, std::floor(g.mean.x() - radius)));
  g.x1 = static_cast<int>(std::min(static_cast<double>(width), std::ceil(g.mean.x() + radius) + 1.0));
  g.y0 = static_cast<int>(std::max(0.0, std::floor(g.mean.y() - radius)));
  g.y1 = static_cast<int>(std::min(static_cast<double>(height), std::ceil(g.mean.y() + radius) + 1.0));
  if (g.x0 >= g.x1 || g.y0 >= g.y1) return g;

  g.opacity = gs.opacity(i);
  const Vec3 v = gs.positions[i] - camera_center;
  g.view_dist = v.norm();
  g.view_dir = g.view_dist > 0.0 ? Vec3(v / g.view_dist) : Vec3(0, 0, 1);
  const auto basis = sh::evaluate_basis(gs.sh_degree, g.view_dir);
  const double* coeffs = &gs.sh[i * gs.sh_stride()];
  g.color_unclamped = Vec3::Constant(0.5);
  for (int k = 0; k < sh::coefficient_count(gs.sh_degree); ++k) {
    for (int c = 0; c < 3; ++c) g.color_unclamped[c] += basis.value[k] * coeffs[k * 3 + c];
  }
  g.color = g.color_unclamped.cwiseMax(0.0);
  g.visible = true;
  return g;
}

struct Frame {
  std::vector<Projected> projected;
  std::vector<int> order;  // visible primitives sorted front to back
  CameraIntrinsics K;
  int width = 0, height = 0;
};

inline Frame prepare_frame(const GaussianSet& gs, const CameraIntrinsics& intrinsics, const Pose& T, int width,
                           int height, const RenderOptions& opt) {
  Frame f;
  f.width = width;
  f.height = height;
  f.K = (intrinsics.width > 0 && intrinsics.height > 0 && (intrinsics.width != width || intrinsics.height != height))
            ? intrinsics.resized(width, height)
            : intrinsics;
  const Vec3 center = T.center();
  f.projected.resize(gs.size());
  for (size_t i = 0; i < gs.size(); ++i) {
    f.projected[i] = project_gaussian(gs, i, f.K, T, center, width, height, opt);
    if (f.projected[i].visible) f.order.push_back(static_cast<int>(i));
  }
  std::stable_sort(f.order.begin(), f.order.end(),
                   [&](int a, int b) { return f.projected[a].depth < f.projected[b].depth; });
  return f;
}

struct Raster {
  Image image;
  std::vector<double> transmittance;
  std::vector<int> last_rank;  // rank of the last contributing primitive, -1 if none
};

inline int resolve_threads(const RenderOptions& opt, int rows) {
  return std::clamp(opt.threads > 0 ? opt.threads : num_threads(), 1, std::max(1, rows));
}

inline Raster rasterize(const Frame& f, const RenderOptions& opt) {
  Raster r;
  r.image = Image(f.width, f.height);
  const size_t npix = static_cast<size_t>(f.width) * f.height;
  r.transmittance.assign(npix, 1.0);
  r.last_rank.assign(npix, -1);
  std::vector<char> done(npix, 0);
  parallel_chunks(f.height, resolve_threads(opt, f.height), [&](int, int row_begin, int row_end) {
    for (int rank = 0; rank < static_cast<int>(f.order.size()); ++rank) {
      const Projected& g = f.projected[f.order[rank]];
      const int y0 = std::max(g.y0, row_begin), y1 = std::min(g.y1, row_end);
      for (int y = y0; y < y1; ++y) {
        for (int x = g.x0; x < g.x1; ++x) {
          const size_t pix = static_cast<size_t>(y) * f.width + x;
          if (done[pix]) continue;
          const double dx = x - g.mean.x(), dy = y - g.mean.y();
          const double power =
              -0.5 * (g.conic(0, 0) * dx * dx + 2.0 * g.conic(0, 1) * dx * dy + g.conic(1, 1) * dy * dy);
          if (power > 0.0) continue;
          const double alpha = std::min(opt.max_alpha, g.opacity * std::exp(power));
          if (alpha < opt.min_alpha) continue;
          const double T = r.transmittance[pix];
          const double next_T = T * (1.0 - alpha);
          if (next_T < opt.min_transmittance) {
            done[pix] = 1;
            continue;
          }
          for (int c = 0; c < 3; ++c) r.image.data[pix * 3 + c] += g.color[c] * alpha * T;
          r.transmittance[pix] = next_T;
          r.last_rank[pix] = rank;
        }
      }
    }
  });
  return r;
}

/// Per-primitive gradients with respect to the 2D quantities.
struct ScreenGradients {
  std::vector<Vec2> mean;
  std::vector<Mat2> conic;  // symmetric, full-matrix convention
  std::vector<double> opacity;
  std::vector<Vec3> color;

  void resize(size_t n) {
    mean.assign(n, Vec2::Zero());
    conic.assign(n, Mat2::Zero());
    opacity.assign(n, 0.0);
    color.assign(n, Vec3::Zero());
  }
};

inline ScreenGradients rasterize_backward(const Frame& f, const Raster& r, const std::vector<double>& d_image,
                                          const RenderOptions& opt) {
  const size_t n = f.projected.size();
  const int chunks = resolve_threads(opt, f.height);
  std::vector<ScreenGradients> partial(chunks);
  for (auto& p : partial) p.resize(n);
  const size_t npix = static_cast<size_t>(f.width) * f.height;
  std::vector<double> T_cur(r.transmittance);
  std::vector<Vec3> behind(npix, Vec3::Zero());

  parallel_chunks(f.height, chunks, [&](int chunk, int row_begin, int row_end) {
    ScreenGradients& acc = partial[chunk];
    for (int rank = static_cast<int>(f.order.size()) - 1; rank >= 0; --rank) {
      const int gi = f.order[rank];
      const Projected& g = f.projected[gi];
      const int y0 = std::max(g.y0, row_begin), y1 = std::min(g.y1, row_end);
      for (int y = y0; y < y1; ++y) {
        for (int x = g.x0; x < g.x1; ++x) {
          const size_t pix = static_cast<size_t>(y) * f.width + x;
          if (rank > r.last_rank[pix]) continue;
          const double dx = x - g.mean.x(), dy = y - g.mean.y();
          const double power =
              -0.5 * (g.conic(0, 0) * dx * dx + 2.0 * g.conic(0, 1) * dx * dy + g.conic(1, 1) * dy * dy);
          if (power > 0.0) continue;
          const double gauss = std::exp(power);
          const double raw_alpha = g.opacity * gauss;
          const double alpha = std::min(opt.max_alpha, raw_alpha);
          if (alpha < opt.min_alpha) continue;
          const double T = T_cur[pix] / (1.0 - alpha);
          const Vec3 dC(d_image[pix * 3], d_image[pix * 3 + 1], d_image[pix * 3 + 2]);
          acc.color[gi] += alpha * T * dC;
          const double d_alpha = T * g.color.dot(dC) - behind[pix].dot(dC) / (1.0 - alpha);
          behind[pix] += alpha * T * g.color;
          T_cur[pix] = T;
          if (raw_alpha > opt.max_alpha) continue;
          acc.opacity[gi] += d_alpha * gauss;
          const double d_power = d_alpha * alpha;
          acc.mean[gi] += d_power * Vec2(g.conic(0, 0) * dx + g.conic(0, 1) * dy,
                                         g.conic(0, 1) * dx + g.conic(1, 1) * dy);
          Mat2 dq;
          dq << dx * dx, dx * dy, dx * dy, dy * dy;
          acc.conic[gi] += (-0.5 * d_power) * dq;
        }
      }
    }
  });
  for (int c = 1; c < chunks; ++c) {
    for (size_t i = 0; i < n; ++i) {
      partial[0].mean[i] += partial[c].mean[i];
      partial[0].conic[i] += partial[c].conic[i];
      partial[0].opacity[i] += partial[c].opacity[i];
      partial[0].color[i] += partial[c].color[i];
    }
  }
  return std::move(partial[0]);
}

}  // namespace detail

inline RenderedImage render(const GaussianSet& gs, const CameraIntrinsics& K, const Pose& T, int width, int height,
                            const RenderOptions& opt = {}) {
  const auto frame = detail::prepare_frame(gs, K, T, width, height, opt);
  auto raster = detail::rasterize(frame, opt);
  return {std::move(raster.image), std::move(raster.transmittance)};
}

struct PhotometricLoss {
  double loss = 0.0;
  double l1 = 0.0;
  double ssim = 1.0;
  std::vector<double> gradient;  // d loss / d rendered
};

/// (1 - lambda) * mean|rendered - target| + lambda * (1 - SSIM(rendered, target)).
inline PhotometricLoss photometric_loss(const Image& rendered, const Image& target, double lambda_ssim,
                                        bool with_gradient = true) {
  require(rendered.same_shape(target), ErrorKind::kInvalidArgument, "target image size differs from render");
  PhotometricLoss out;
  const double n = static_cast<double>(rendered.size());
  out.l1 = mean_abs_error(rendered, target);
  const bool need_ssim = lambda_ssim != 0.0;
  SsimResult s = need_ssim ? ssim(rendered, target, with_gradient) : SsimResult{};
  out.ssim = need_ssim ? s.value : ssim(rendered, target).value;
  out.loss = (1.0 - lambda_ssim) * out.l1 + lambda_ssim * (1.0 - out.ssim);
  if (with_gradient) {
    out.gradient.assign(rendered.size(), 0.0);
    for (size_t i = 0; i < rendered.size(); ++i) {
      const double d = rendered.data[i] - target.data[i];
      const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      out.gradient[i] = (1.0 - lambda_ssim) * sign / n;
      if (need_ssim) out.gradient[i] -= lambda_ssim * s.gradient[i];
    }
  }
  return out;
}

/// Renders from pose T and back-propagates the photometric loss to every
/// primitive parameter and to a left-multiplied twist on T.
inline RenderGradients render_with_gradients(const GaussianSet& gs, const CameraIntrinsics& K, const Pose& T,
                                             const Image& target, double lambda_ssim,
                                             const RenderOptions& opt = {}) {
  const auto frame = detail::prepare_frame(gs, K, T, target.width, target.height, opt);
  auto raster = detail::rasterize(frame, opt);
  const auto photo = photometric_loss(raster.image, target, lambda_ssim);
  const auto screen = detail::rasterize_backward(frame, raster, photo.gradient, opt);

  RenderGradients out;
  out.loss = photo.loss;
  out.l1 = photo.l1;
  out.ssim = photo.ssim;
  const size_t n = gs.size();
  out.positions.assign(n, Vec3::Zero());
  out.log_scales.assign(n, Vec3::Zero());
  out.rotations.assign(n, Vec4::Zero());
  out.opacity_logits.assign(n, 0.0);
  out.sh.assign(gs.sh.size(), 0.0);

  const Mat3& W = T.rotation;
  const double fx = frame.K.focal_x, fy = frame.K.focal_y;
  const int ncoef = sh::coefficient_count(gs.sh_degree);
  Vec3 d_center = Vec3::Zero();
  for (int gi : frame.order) {
    const auto& g = frame.projected[gi];
    // Opacity.
    const double o = g.opacity;
    out.opacity_logits[gi] = screen.opacity[gi] * o * (1.0 - o);
    // Color through the SH basis; clamped channels pass no gradient.
    Vec3 d_color = screen.color[gi];
    for (int c = 0; c < 3; ++c) {
      if (g.color_unclamped[c] < 0.0) d_color[c] = 0.0;
    }
    const auto basis = sh::evaluate_basis(gs.sh_degree, g.view_dir);
    const double* coeffs = &gs.sh[gi * gs.sh_stride()];
    Vec3 d_dir = Vec3::Zero();
    for (int k = 0; k < ncoef; ++k) {
      for (int c = 0; c < 3; ++c) {
        out.sh[gi * gs.sh_stride() + k * 3 + c] = basis.value[k] * d_color[c];
        d_dir += basis.gradient[k] * (coeffs[k * 3 + c] * d_color[c]);
      }
    }
    Vec3 d_mu = Vec3::Zero();
    if (gs.sh_degree > 0 && g.view_dist > 0.0) {
      const Vec3 d_v = (Mat3::Identity() - g.view_dir * g.view_dir.transpose()) * d_dir / g.view_dist;
      d_mu += d_v;
      d_center -= d_v;
    }
    // Conic -> 2D covariance -> camera covariance and projection Jacobian.
    const Mat2 H2 = -g.conic * screen.conic[gi] * g.conic;
    const Mat3 Hc = g.jac.transpose() * H2 * g.jac;
    const Mat23 HJ = 2.0 * H2 * g.jac * g.sigma_cam;
    // World covariance -> scale and rotation.
    const Mat3 Hs = W.transpose() * Hc * W;
    const Mat3 M = g.rot * g.scale.asDiagonal();
    const Mat3 dM = 2.0 * Hs * M;
    const Mat3 d_rot = dM * g.scale.asDiagonal();
    const Mat3 rt_dM = g.rot.transpose() * dM;
    for (int k = 0; k < 3; ++k) out.log_scales[gi][k] = rt_dM(k, k) * g.scale[k];
    const Vec4& q = gs.rotations[gi];
    const double qnorm = q.norm();
    const Vec4 qn = q / qnorm;
    const Vec4 d_qn = detail::quaternion_matrix_vjp(qn, d_rot);
    out.rotations[gi] = (d_qn - qn * qn.dot(d_qn)) / qnorm;
    // Camera-frame point: through the mean and through the Jacobian.
    const double x = g.p_cam.x(), y = g.p_cam.y(), z = g.p_cam.z();
    Vec3 d_p = g.jac.transpose() * screen.mean[gi];
    d_p.x() += HJ(0, 2) * (-fx / (z * z));
    d_p.y() += HJ(1, 2) * (-fy / (z * z));
    d_p.z() += HJ(0, 0) * (-fx / (z * z)) + HJ(0, 2) * (2.0 * fx * x / (z * z * z)) + HJ(1, 1) * (-fy / (z * z)) +
               HJ(1, 2) * (2.0 * fy * y / (z * z * z));
    d_mu += W.transpose() * d_p;
    out.positions[gi] = d_mu;
    // Pose twist: p' = p + w x p + rho and W' = exp(w) W.
    out.pose.tail<3>() += d_p;
    out.pose.head<3>() += g.p_cam.cross(d_p);
    for (int k = 0; k < 3; ++k) {
      const Mat3 E = hat(Vec3::Unit(k)) * g.sigma_cam;
      out.pose[k] += 2.0 * (Hc.array() * E.array()).sum();
    }
  }
  // Camera center c' = c - W^T rho under a left twist.
  out.pose.tail<3>() -= W * d_center;
  out.rendered = std::move(raster.image);
  return out;
}

}  // namespace jsfm

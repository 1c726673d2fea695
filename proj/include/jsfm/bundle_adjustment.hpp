#pragma once

// Robust bundle adjustment: Huber-weighted reprojection error over SE(3)
// poses, points and an optional shared focal length, solved with
// Levenberg-Marquardt on the Schur-reduced camera system.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "jsfm/error.hpp"
#include "jsfm/geometry.hpp"
#include "jsfm/parallel.hpp"
#include "jsfm/robust.hpp"
#include "jsfm/types.hpp"

namespace jsfm {

struct Reconstruction {
  std::map<int, CameraIntrinsics> intrinsics;
  std::map<int, Pose> poses;
  std::vector<Track> tracks;  // every track carries a point

  std::vector<int> camera_ids() const {
    std::vector<int> ids;
    for (const auto& [i, T] : poses) ids.push_back(i);
    return ids;
  }
  size_t observation_count() const {
    size_t n = 0;
    for (const auto& t : tracks) n += t.observations.size();
    return n;
  }
};

/// project(K, T, X) - x_obs in pixels.
inline Vec2 reprojection_residual(const CameraIntrinsics& K, const Pose& T, const Vec3& X, const Vec2& x_obs) {
  return project(K, T, X) - x_obs;
}

struct ReprojectionJacobians {
  Eigen::Matrix<double, 2, 6> pose;  // left twist (w, rho)
  Eigen::Matrix<double, 2, 3> point;
  Vec2 focal;  // common offset added to focal_x and focal_y
};

/// Analytic derivatives of the projection; requires positive depth.
inline ReprojectionJacobians reprojection_jacobians(const CameraIntrinsics& K, const Pose& T, const Vec3& X) {
  const Vec3 p = T.transform(X);
  require(p.z() > kDepthEpsilon, ErrorKind::kNonPositiveDepth, "point at or behind the image plane");
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> Jpi;
  Jpi << K.focal_x * iz, 0.0, -K.focal_x * p.x() * iz * iz, 0.0, K.focal_y * iz, -K.focal_y * p.y() * iz * iz;
  ReprojectionJacobians J;
  J.pose.leftCols<3>() = -Jpi * hat(p);
  J.pose.rightCols<3>() = Jpi;
  J.point = Jpi * T.rotation;
  J.focal = Vec2(p.x() * iz, p.y() * iz);
  return J;
}

struct BAOptions {
  double huber_delta = 2.0;  // px
  std::vector<double> filter_thresholds = {8.0, 4.0, 2.0};
  bool optimize_intrinsics = false;
  int max_lm_iters = 50;
  double lambda_init = 1e-4;
  double function_tolerance = 1e-12;  // relative cost decrease
  int anchor = -1;        // -1: smallest camera id
  int scale_camera = -1;  // -1: camera farthest from the anchor
  int dense_camera_limit = 300;
  double max_filtered_fraction = 0.5;
  int threads = 1;

  void validate() const {
    require(huber_delta > 0.0 && max_lm_iters >= 0, ErrorKind::kInvalidArgument, "invalid BA options");
    for (size_t k = 0; k < filter_thresholds.size(); ++k) {
      require(filter_thresholds[k] > 0.0, ErrorKind::kInvalidArgument, "filter thresholds must be positive");
      if (k > 0)
        require(filter_thresholds[k] < filter_thresholds[k - 1], ErrorKind::kInvalidArgument,
                "filter thresholds must be strictly decreasing");
    }
  }
};

struct BAStats {
  int iterations = 0;
  int accepted = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> cost_history;  // accepted iterates, first = initial
};

struct BARoundStats {
  int round = 0;
  double threshold = 0.0;
  int observations = 0;   // entering the round
  int filtered = 0;       // removed after the round's BA
  int tracks_removed = 0;
  double rms_px = 0.0;    // after BA, before filtering
  double rms_after_filter_px = 0.0;
  int lm_iterations = 0;
};

/// Frozen gauge: the anchor pose entirely, and translation twist component
/// `scale_axis` of the scale camera.
struct BAGauge {
  int anchor = -1;
  int scale_camera = -1;
  int scale_axis = 0;
};

inline BAGauge choose_gauge(const Reconstruction& r, int anchor = -1, int scale_camera = -1) {
  const auto ids = r.camera_ids();
  require(ids.size() >= 2, ErrorKind::kInvalidArgument, "bundle adjustment needs two cameras");
  BAGauge g;
  g.anchor = anchor >= 0 ? anchor : ids.front();
  require(r.poses.count(g.anchor) > 0, ErrorKind::kInvalidArgument, "anchor camera missing");
  const Vec3 c0 = r.poses.at(g.anchor).center();
  if (scale_camera >= 0) {
    g.scale_camera = scale_camera;
  } else {
    double best = -1.0;
    for (int i : ids) {
      if (i == g.anchor) continue;
      const double d = (r.poses.at(i).center() - c0).norm();
      if (d > best) {
        best = d;
        g.scale_camera = i;
      }
    }
  }
  require(r.poses.count(g.scale_camera) > 0 && g.scale_camera != g.anchor, ErrorKind::kInvalidArgument,
          "invalid scale camera");
  // Scaling about the anchor moves t_s along R_s (c_s - c0); freeze its largest component.
  const Pose& Ts = r.poses.at(g.scale_camera);
  const Vec3 dir = Ts.rotation * (Ts.center() - c0);
  dir.cwiseAbs().maxCoeff(&g.scale_axis);
  return g;
}

namespace detail {

struct BALayout {
  std::map<int, std::array<int, 6>> cam_cols;  // -1: frozen
  int focal_col = -1;
  int n_cam = 0;  // reduced system size
};

inline BALayout make_layout(const Reconstruction& r, const BAGauge& g, bool optimize_focal) {
  std::map<int, int> seen;
  for (const auto& t : r.tracks)
    for (const auto& o : t.observations) ++seen[o.image];
  BALayout L;
  for (const auto& [i, T] : r.poses) {
    std::array<int, 6> cols;
    cols.fill(-1);
    if (i != g.anchor && seen.count(i)) {
      for (int k = 0; k < 6; ++k) {
        if (i == g.scale_camera && k == 3 + g.scale_axis) continue;
        cols[k] = L.n_cam++;
      }
    }
    L.cam_cols[i] = cols;
  }
  if (optimize_focal) L.focal_col = L.n_cam++;
  return L;
}

struct ObsLin {
  bool valid = false;
  Vec2 r = Vec2::Zero();
  double w = 0.0;
  Eigen::Matrix<double, 2, 7> A;  // free camera columns (and focal), compacted
  std::array<int, 7> cols{};
  int m = 0;
  Eigen::Matrix<double, 2, 3> Jp;
};

struct TrackLin {
  std::vector<ObsLin> obs;
};

inline constexpr double kInvalidResidualSq = 1e8;  // (1e4 px)^2 stand-in for cheirality failures

inline std::vector<TrackLin> linearize(const Reconstruction& rec, const BALayout& L, const RobustKernel& kernel,
                                       int threads) {
  std::vector<TrackLin> lin(rec.tracks.size());
  parallel_chunks(static_cast<int>(rec.tracks.size()), threads, [&](int, int begin, int end) {
    for (int k = begin; k < end; ++k) {
      const auto& t = rec.tracks[k];
      auto& tl = lin[k];
      tl.obs.resize(t.observations.size());
      for (size_t q = 0; q < t.observations.size(); ++q) {
        const auto& o = t.observations[q];
        auto& ol = tl.obs[q];
        const auto& K = rec.intrinsics.at(o.image);
        const auto& T = rec.poses.at(o.image);
        const auto px = try_project(K, T, *t.point);
        if (!px) continue;
        ol.valid = true;
        ol.r = *px - o.pixel;
        ol.w = kernel.weight(ol.r.squaredNorm());
        const auto J = reprojection_jacobians(K, T, *t.point);
        ol.Jp = J.point;
        const auto& cols = L.cam_cols.at(o.image);
        for (int c = 0; c < 6; ++c) {
          if (cols[c] < 0) continue;
          ol.A.col(ol.m) = J.pose.col(c);
          ol.cols[ol.m++] = cols[c];
        }
        if (L.focal_col >= 0) {
          ol.A.col(ol.m) = J.focal;
          ol.cols[ol.m++] = L.focal_col;
        }
      }
    }
  });
  return lin;
}

inline double robust_cost(const Reconstruction& rec, const RobustKernel& kernel) {
  double total = 0.0;
  for (const auto& t : rec.tracks)
    for (const auto& o : t.observations) {
      const auto px = try_project(rec.intrinsics.at(o.image), rec.poses.at(o.image), *t.point);
      total += kernel.value(px ? (*px - o.pixel).squaredNorm() : kInvalidResidualSq);
    }
  return total;
}

struct BAStep {
  Eigen::VectorXd cameras;
  std::vector<Vec3> points;
};

inline double damp(double diag, double lambda) { return lambda * std::max(diag, 1e-9); }

inline Eigen::VectorXd solve_pcg(const Eigen::MatrixXd& S, const Eigen::VectorXd& b) {
  const Eigen::VectorXd Minv = S.diagonal().cwiseMax(1e-300).cwiseInverse();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size()), r = b, z = Minv.cwiseProduct(r), p = z;
  double rz = r.dot(z);
  const double stop = 1e-14 * b.norm();
  for (int it = 0; it < 10 * b.size() && r.norm() > stop; ++it) {
    const Eigen::VectorXd Sp = S * p;
    const double alpha = rz / p.dot(Sp);
    x += alpha * p;
    r -= alpha * Sp;
    z = Minv.cwiseProduct(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return x;
}

/// Gradient g = J^T W r and the product (H + lambda diag H) d evaluated
/// observation by observation, without forming H.
struct NormalOperator {
  const std::vector<TrackLin>& lin;
  const BALayout& L;
  double lambda;
  Eigen::VectorXd cam_diag;  // undamped diagonal of the camera block
  std::vector<Vec3> pt_diag;

  NormalOperator(const std::vector<TrackLin>& l, const BALayout& layout, double lam)
      : lin(l), L(layout), lambda(lam), cam_diag(Eigen::VectorXd::Zero(layout.n_cam)), pt_diag(l.size(), Vec3::Zero()) {
    for (size_t k = 0; k < lin.size(); ++k)
      for (const auto& o : lin[k].obs) {
        if (!o.valid) continue;
        for (int a = 0; a < o.m; ++a) cam_diag(o.cols[a]) += o.w * o.A.col(a).squaredNorm();
        pt_diag[k] += o.w * o.Jp.colwise().squaredNorm().transpose();
      }
  }

  BAStep gradient() const {
    BAStep g{Eigen::VectorXd::Zero(L.n_cam), std::vector<Vec3>(lin.size(), Vec3::Zero())};
    for (size_t k = 0; k < lin.size(); ++k)
      for (const auto& o : lin[k].obs) {
        if (!o.valid) continue;
        const Eigen::VectorXd gc = o.w * o.A.leftCols(o.m).transpose() * o.r;
        for (int a = 0; a < o.m; ++a) g.cameras(o.cols[a]) += gc(a);
        g.points[k] += o.w * o.Jp.transpose() * o.r;
      }
    return g;
  }

  BAStep apply(const BAStep& d) const {
    BAStep out{Eigen::VectorXd::Zero(L.n_cam), std::vector<Vec3>(lin.size(), Vec3::Zero())};
    for (size_t k = 0; k < lin.size(); ++k)
      for (const auto& o : lin[k].obs) {
        if (!o.valid) continue;
        Eigen::VectorXd dc(o.m);
        for (int a = 0; a < o.m; ++a) dc(a) = d.cameras(o.cols[a]);
        const Vec2 Jd = o.A.leftCols(o.m) * dc + o.Jp * d.points[k];
        const Eigen::VectorXd hc = o.w * o.A.leftCols(o.m).transpose() * Jd;
        for (int a = 0; a < o.m; ++a) out.cameras(o.cols[a]) += hc(a);
        out.points[k] += o.w * o.Jp.transpose() * Jd;
      }
    for (int c = 0; c < L.n_cam; ++c) out.cameras(c) += damp(cam_diag(c), lambda) * d.cameras(c);
    for (size_t k = 0; k < lin.size(); ++k)
      for (int a = 0; a < 3; ++a) out.points[k](a) += damp(pt_diag[k](a), lambda) * d.points[k](a);
    return out;
  }
};

inline BAStep step_axpy(const BAStep& x, double a, const BAStep& y) {
  BAStep out = x;
  out.cameras += a * y.cameras;
  for (size_t k = 0; k < out.points.size(); ++k) out.points[k] += a * y.points[k];
  return out;
}

/// Factorization of the damped system with point blocks eliminated; solves
/// (H + lambda diag H) d = rhs for any right-hand side.
class SchurSolver {
 public:
  SchurSolver(const std::vector<TrackLin>& lin, const BALayout& L, const NormalOperator& op,
              int dense_camera_limit)
      : lin_(lin), L_(L), Hinv_(lin.size()), E_(lin.size()) {
    const int nc = L.n_cam;
    S_ = Eigen::MatrixXd::Zero(nc, nc);
    for (const auto& tl : lin)
      for (const auto& o : tl.obs) {
        if (!o.valid) continue;
        const auto A = o.A.leftCols(o.m);
        const Eigen::MatrixXd H = o.w * A.transpose() * A;
        for (int a = 0; a < o.m; ++a)
          for (int b = 0; b < o.m; ++b) S_(o.cols[a], o.cols[b]) += H(a, b);
      }
    for (int k = 0; k < nc; ++k) S_(k, k) += damp(op.cam_diag(k), op.lambda);
    for (size_t k = 0; k < lin.size(); ++k) {
      const auto& tl = lin[k];
      Mat3 Hkk = Mat3::Zero();
      E_[k].resize(tl.obs.size());
      for (size_t q = 0; q < tl.obs.size(); ++q) {
        const auto& o = tl.obs[q];
        if (!o.valid) continue;
        Hkk += o.w * o.Jp.transpose() * o.Jp;
        E_[k][q] = o.w * o.A.leftCols(o.m).transpose() * o.Jp;
      }
      for (int d = 0; d < 3; ++d) Hkk(d, d) += damp(op.pt_diag[k](d), op.lambda);
      Hinv_[k] = Hkk.inverse();
      for (size_t p = 0; p < tl.obs.size(); ++p) {
        const auto& op_ = tl.obs[p];
        if (!op_.valid || op_.m == 0) continue;
        const Eigen::MatrixXd EpInv = E_[k][p] * Hinv_[k];
        for (size_t q = 0; q < tl.obs.size(); ++q) {
          const auto& oq = tl.obs[q];
          if (!oq.valid || oq.m == 0) continue;
          const Eigen::MatrixXd B = EpInv * E_[k][q].transpose();
          for (int a = 0; a < op_.m; ++a)
            for (int b = 0; b < oq.m; ++b) S_(op_.cols[a], oq.cols[b]) -= B(a, b);
        }
      }
    }
    use_pcg_ = nc > 6 * dense_camera_limit;
    if (nc > 0 && !use_pcg_) {
      llt_.compute(S_);
      ok_ = llt_.info() == Eigen::Success;
    }
  }

  bool ok() const { return ok_; }

  BAStep solve(const BAStep& rhs) const {
    Eigen::VectorXd rc = rhs.cameras;
    for (size_t k = 0; k < lin_.size(); ++k) {
      const Vec3 t = Hinv_[k] * rhs.points[k];
      for (size_t p = 0; p < lin_[k].obs.size(); ++p) {
        const auto& o = lin_[k].obs[p];
        if (!o.valid || o.m == 0) continue;
        const Eigen::VectorXd c = E_[k][p] * t;
        for (int a = 0; a < o.m; ++a) rc(o.cols[a]) -= c(a);
      }
    }
    BAStep d;
    if (L_.n_cam == 0) d.cameras = Eigen::VectorXd::Zero(0);
    else d.cameras = use_pcg_ ? solve_pcg(S_, rc) : Eigen::VectorXd(llt_.solve(rc));
    d.points.resize(lin_.size());
    for (size_t k = 0; k < lin_.size(); ++k) {
      Vec3 r = rhs.points[k];
      for (size_t p = 0; p < lin_[k].obs.size(); ++p) {
        const auto& o = lin_[k].obs[p];
        if (!o.valid || o.m == 0) continue;
        Eigen::VectorXd dc(o.m);
        for (int a = 0; a < o.m; ++a) dc(a) = d.cameras(o.cols[a]);
        r -= E_[k][p].transpose() * dc;
      }
      d.points[k] = Hinv_[k] * r;
    }
    return d;
  }

 private:
  const std::vector<TrackLin>& lin_;
  const BALayout& L_;
  Eigen::MatrixXd S_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::vector<Mat3> Hinv_;
  std::vector<std::vector<Eigen::MatrixXd>> E_;
  bool use_pcg_ = false;
  bool ok_ = true;
};

inline bool finite(const BAStep& s) {
  if (!s.cameras.allFinite()) return false;
  for (const auto& p : s.points)
    if (!p.allFinite()) return false;
  return true;
}

/// Damped Gauss-Newton step (H + lambda diag H) d = -g with point blocks
/// eliminated, plus one round of iterative refinement against the full
/// system. Returns nullopt if the reduced system is not positive definite.
inline std::optional<BAStep> schur_step(const std::vector<TrackLin>& lin, const BALayout& L, double lambda,
                                        int dense_camera_limit = 300) {
  const NormalOperator op(lin, L, lambda);
  const SchurSolver solver(lin, L, op, dense_camera_limit);
  if (!solver.ok()) return std::nullopt;
  BAStep rhs = op.gradient();
  rhs = step_axpy(BAStep{Eigen::VectorXd::Zero(L.n_cam), std::vector<Vec3>(lin.size(), Vec3::Zero())}, -1.0, rhs);
  BAStep d = solver.solve(rhs);
  d = step_axpy(d, 1.0, solver.solve(step_axpy(rhs, -1.0, op.apply(d))));
  if (!finite(d)) return std::nullopt;
  return d;
}

/// Reference: the same damped step from the full dense normal equations.
inline std::optional<BAStep> dense_step(const std::vector<TrackLin>& lin, const BALayout& L, double lambda) {
  const int nc = L.n_cam;
  const int n = nc + 3 * static_cast<int>(lin.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  for (size_t k = 0; k < lin.size(); ++k)
    for (const auto& o : lin[k].obs) {
      if (!o.valid) continue;
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2, n);
      for (int a = 0; a < o.m; ++a) J.col(o.cols[a]) = o.A.col(a);
      J.block<2, 3>(0, nc + 3 * static_cast<int>(k)) = o.Jp;
      H += o.w * J.transpose() * J;
      g += o.w * J.transpose() * o.r;
    }
  const Eigen::VectorXd diag = H.diagonal();
  for (int k = 0; k < n; ++k) H(k, k) += damp(diag(k), lambda);
  const Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Eigen::VectorXd d = llt.solve(-g);
  d += llt.solve(-g - H * d);
  BAStep step;
  step.cameras = d.head(nc);
  for (size_t k = 0; k < lin.size(); ++k) step.points.push_back(d.segment<3>(nc + 3 * static_cast<int>(k)));
  return step;
}

inline Reconstruction apply_step(const Reconstruction& rec, const BALayout& L, const BAStep& step) {
  Reconstruction out = rec;
  for (auto& [i, T] : out.poses) {
    const auto& cols = L.cam_cols.at(i);
    Vec6 xi = Vec6::Zero();
    bool any = false;
    for (int c = 0; c < 6; ++c)
      if (cols[c] >= 0) {
        xi(c) = step.cameras(cols[c]);
        any = true;
      }
    if (any) T = se3_compose(T, xi);
  }
  if (L.focal_col >= 0) {
    const double df = step.cameras(L.focal_col);
    for (auto& [i, K] : out.intrinsics) {
      K.focal_x += df;
      K.focal_y += df;
    }
  }
  for (size_t k = 0; k < out.tracks.size(); ++k) *out.tracks[k].point += step.points[k];
  return out;
}

}  // namespace detail

/// Root-mean-square reprojection error (px) over observations in front of
/// their camera.
inline double reprojection_rms(const Reconstruction& rec) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& t : rec.tracks)
    for (const auto& o : t.observations) {
      const auto px = try_project(rec.intrinsics.at(o.image), rec.poses.at(o.image), *t.point);
      if (!px) continue;
      sum += (*px - o.pixel).squaredNorm();
      ++n;
    }
  return n ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
}

/// Levenberg-Marquardt on sum rho_Huber(|r|^2). Only steps that lower the
/// robust cost are accepted; the gauge parameters are never touched.
inline Reconstruction bundle_adjust(const Reconstruction& input, const BAOptions& opt = {},
                                    BAStats* stats = nullptr, const BAGauge* gauge = nullptr) {
  opt.validate();
  for (const auto& t : input.tracks)
    require(t.point.has_value(), ErrorKind::kInvalidArgument, "bundle adjustment needs triangulated tracks");
  const BAGauge g = gauge ? *gauge : choose_gauge(input, opt.anchor, opt.scale_camera);
  const auto L = detail::make_layout(input, g, opt.optimize_intrinsics);
  const auto kernel = RobustKernel::huber(opt.huber_delta);

  Reconstruction rec = input;
  double cost = detail::robust_cost(rec, kernel);
  BAStats st;
  st.initial_cost = cost;
  st.cost_history.push_back(cost);
  double lambda = opt.lambda_init;
  for (int it = 0; it < opt.max_lm_iters && cost > 1e-28; ++it) {
    const auto lin = detail::linearize(rec, L, kernel, std::max(1, opt.threads));
    bool accepted = false;
    bool converged = false;
    while (!accepted) {
      ++st.iterations;
      const auto step = detail::schur_step(lin, L, lambda, opt.dense_camera_limit);
      if (!step) {
        lambda *= 10.0;
        require(lambda < 1e16, ErrorKind::kNumericalFailure, "reduced camera system is not positive definite");
        continue;
      }
      Reconstruction cand = detail::apply_step(rec, L, *step);
      const double c = detail::robust_cost(cand, kernel);
      if (c < cost) {
        const double rel = (cost - c) / cost;
        rec = std::move(cand);
        cost = c;
        st.cost_history.push_back(c);
        ++st.accepted;
        lambda = std::max(lambda * 0.5, 1e-15);
        accepted = true;
        converged = rel < opt.function_tolerance;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          converged = true;
          break;
        }
      }
    }
    if (converged) break;
  }
  st.final_cost = cost;
  if (stats) *stats = st;
  return rec;
}

struct FilteredBAResult {
  Reconstruction reconstruction;
  std::vector<BARoundStats> rounds;
  int total_filtered = 0;
};

/// One bundle adjustment per threshold, each followed by removal of
/// observations above the threshold (or behind their camera). Tracks left
/// with fewer than two observations are deleted.
inline FilteredBAResult iterate_ba_with_filtering(const Reconstruction& input, const BAOptions& opt = {}) {
  opt.validate();
  const BAGauge gauge = choose_gauge(input, opt.anchor, opt.scale_camera);
  const size_t initial = input.observation_count();
  FilteredBAResult res;
  Reconstruction rec = input;
  for (size_t round = 0; round < opt.filter_thresholds.size(); ++round) {
    const double thr = opt.filter_thresholds[round];
    BARoundStats rs;
    rs.round = static_cast<int>(round);
    rs.threshold = thr;
    rs.observations = static_cast<int>(rec.observation_count());
    BAStats st;
    rec = bundle_adjust(rec, opt, &st, &gauge);
    rs.lm_iterations = st.iterations;
    rs.rms_px = reprojection_rms(rec);
    std::vector<Track> kept;
    for (auto& t : rec.tracks) {
      const size_t before = t.observations.size();
      std::erase_if(t.observations, [&](const Observation& o) {
        const auto px = try_project(rec.intrinsics.at(o.image), rec.poses.at(o.image), *t.point);
        return !px || (*px - o.pixel).norm() > thr;
      });
      rs.filtered += static_cast<int>(before - t.observations.size());
      if (t.observations.size() >= 2) {
        kept.push_back(std::move(t));
      } else {
        rs.filtered += static_cast<int>(t.observations.size());
        ++rs.tracks_removed;
      }
    }
    rec.tracks = std::move(kept);
    rs.rms_after_filter_px = reprojection_rms(rec);
    res.total_filtered += rs.filtered;
    res.rounds.push_back(rs);
    require(static_cast<double>(res.total_filtered) <= opt.max_filtered_fraction * static_cast<double>(initial),
            ErrorKind::kTooFewObservations, "more than half of the observations were filtered");
  }
  res.reconstruction = std::move(rec);
  return res;
}

}  // namespace jsfm

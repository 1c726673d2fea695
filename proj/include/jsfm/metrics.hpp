#pragma once

// Pose accuracy metrics with gauge alignment.

#include <algorithm>
#include <vector>

#include <Eigen/Dense>

#include "jsfm/error.hpp"
#include "jsfm/geometry.hpp"

namespace jsfm {

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
};

inline Summary summarize(std::vector<double> v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) {
    s.mean += x;
    s.max = std::max(s.max, x);
  }
  s.mean /= static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return s;
}

struct RotationErrors {
  std::vector<double> per_camera_deg;
  Summary summary;
  Mat3 alignment = Mat3::Identity();  // R_est * alignment ~= R_gt
};

/// Geodesic error of each camera after the global rotation that best aligns
/// the estimate to ground truth in the chordal sense.
inline RotationErrors rotation_error(const std::vector<Pose>& est, const std::vector<Pose>& gt) {
  require(est.size() == gt.size() && !est.empty(), ErrorKind::kInvalidArgument, "pose lists differ in size");
  Mat3 M = Mat3::Zero();
  for (size_t i = 0; i < est.size(); ++i) M += est[i].rotation.transpose() * gt[i].rotation;
  RotationErrors out;
  out.alignment = nearest_rotation(M);
  for (size_t i = 0; i < est.size(); ++i)
    out.per_camera_deg.push_back(rad2deg(rotation_angle(gt[i].rotation, est[i].rotation * out.alignment)));
  out.summary = summarize(out.per_camera_deg);
  return out;
}

/// x_gt ~= scale * rotation * x_est + translation.
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  /// World->camera pose expressed in the aligned frame.
  Pose apply(const Pose& T) const {
    return Pose::from_center(T.rotation * rotation.transpose(), apply(T.center()));
  }
};

/// Closed-form least-squares similarity (Umeyama) mapping src onto dst.
inline Similarity umeyama(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  require(src.size() == dst.size() && src.size() >= 3, ErrorKind::kInvalidArgument,
          "alignment needs at least 3 correspondences");
  const double n = static_cast<double>(src.size());
  Vec3 ms = Vec3::Zero(), md = Vec3::Zero();
  for (size_t k = 0; k < src.size(); ++k) {
    ms += src[k];
    md += dst[k];
  }
  ms /= n;
  md /= n;
  Mat3 cov = Mat3::Zero();
  double var_src = 0.0;
  for (size_t k = 0; k < src.size(); ++k) {
    cov += (dst[k] - md) * (src[k] - ms).transpose();
    var_src += (src[k] - ms).squaredNorm();
  }
  cov /= n;
  var_src /= n;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // Rank < 2 means all centers are collinear (or coincident).
  require(var_src > 0.0 && sv[1] > 1e-12 * std::max(sv[0], 1e-300), ErrorKind::kDegenerateAlignment,
          "camera centers are collinear");
  Mat3 S = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) S(2, 2) = -1;
  Similarity sim;
  sim.rotation = svd.matrixU() * S * svd.matrixV().transpose();
  sim.scale = (sv.asDiagonal() * S).trace() / var_src;
  sim.translation = md - sim.scale * sim.rotation * ms;
  return sim;
}

struct TrajectoryError {
  double rmse = 0.0;
  std::vector<double> per_camera;
  Similarity alignment;
};

/// Absolute trajectory error: RMS camera-center distance after similarity
/// alignment of the estimate onto ground truth.
inline TrajectoryError ate(const std::vector<Pose>& est, const std::vector<Pose>& gt) {
  require(est.size() == gt.size(), ErrorKind::kInvalidArgument, "pose lists differ in size");
  require(est.size() >= 3, ErrorKind::kInvalidArgument, "ATE needs at least 3 cameras");
  std::vector<Vec3> ce, cg;
  for (size_t i = 0; i < est.size(); ++i) {
    ce.push_back(est[i].center());
    cg.push_back(gt[i].center());
  }
  TrajectoryError out;
  out.alignment = umeyama(ce, cg);
  double sum = 0.0;
  for (size_t i = 0; i < ce.size(); ++i) {
    const double d = (out.alignment.apply(ce[i]) - cg[i]).norm();
    out.per_camera.push_back(d);
    sum += d * d;
  }
  out.rmse = std::sqrt(sum / static_cast<double>(ce.size()));
  return out;
}

}  // namespace jsfm

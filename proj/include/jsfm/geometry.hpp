#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>
#include <optional>

#include "jsfm/error.hpp"

namespace jsfm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

/// Points closer to the image plane than this are treated as behind the camera.
inline constexpr double kDepthEpsilon = 1e-8;

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

// ---------------------------------------------------------------------------
// SO(3)

/// Rodrigues' formula.
inline Mat3 so3_exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = hat(w);
  double a, b;
  if (theta2 < 1e-12) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * W + b * W * W;
}

/// Logarithm map with |w| <= pi. Near pi the axis is read off the symmetric
/// part, picking the largest diagonal entry (lowest index on ties).
inline Vec3 so3_log(const Mat3& R) {
  const Vec3 v = 0.5 * vee(R - R.transpose());  // sin(theta) * axis
  const double s = v.norm();
  const double c = 0.5 * (R.trace() - 1.0);
  const double theta = std::atan2(s, c);
  if (theta < 1e-6) {
    return v * (1.0 + theta * theta / 6.0);
  }
  if (std::numbers::pi - theta > 1e-3) {
    return v * (theta / s);
  }
  // aa^T = (R + R^T - 2c I) / (2 (1 - c))
  const Mat3 S = (0.5 * (R + R.transpose()) - c * Mat3::Identity()) / (1.0 - c);
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (S(i, i) > S(k, k)) k = i;
  }
  Vec3 axis = S.col(k) / std::sqrt(std::max(S(k, k), 1e-300));
  axis.normalize();
  if (axis.dot(v) < 0.0) axis = -axis;
  return theta * axis;
}

/// Geodesic angle between two rotations, in radians.
inline double rotation_angle(const Mat3& a, const Mat3& b) { return so3_log(a * b.transpose()).norm(); }

/// Left Jacobian J with exp(w + d) ~= exp(J d) exp(w).
inline Mat3 so3_left_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = hat(w);
  if (theta2 < 1e-12) return Mat3::Identity() + 0.5 * W + W * W / 6.0;
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (1.0 - std::cos(theta)) / theta2 * W +
         (theta - std::sin(theta)) / (theta2 * theta) * W * W;
}

inline Mat3 so3_left_jacobian_inverse(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = hat(w);
  if (theta2 < 1e-12) return Mat3::Identity() - 0.5 * W + W * W / 12.0;
  const double theta = std::sqrt(theta2);
  const double coeff = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * W + coeff * W * W;
}

/// Right Jacobian: exp(w + d) ~= exp(w) exp(Jr d).
inline Mat3 so3_right_jacobian(const Vec3& w) { return so3_left_jacobian(-w); }
inline Mat3 so3_right_jacobian_inverse(const Vec3& w) { return so3_left_jacobian_inverse(-w); }

/// Projects an arbitrary 3x3 matrix to the nearest rotation (Frobenius).
inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

// ---------------------------------------------------------------------------
// SE(3)

/// World-to-camera rigid transform: x_cam = R * X + t.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  /// Pose whose camera center is `center` with world-to-camera rotation `rotation`.
  static Pose from_center(const Mat3& rotation, const Vec3& center) {
    return {rotation, -rotation * center};
  }

  Vec3 transform(const Vec3& X) const { return rotation * X + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }
  Pose inverse() const { return {rotation.transpose(), -rotation.transpose() * translation}; }

  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
};

/// Twist layout is (rotation w, translation rho).
inline Pose se3_exp(const Vec6& xi) {
  const Vec3 w = xi.head<3>();
  return {so3_exp(w), so3_left_jacobian(w) * xi.tail<3>()};
}

inline Vec6 se3_log(const Pose& T) {
  Vec6 xi;
  const Vec3 w = so3_log(T.rotation);
  xi.head<3>() = w;
  xi.tail<3>() = so3_left_jacobian_inverse(w) * T.translation;
  return xi;
}

/// Left-multiplicative update exp(delta) * base. A zero twist returns base exactly.
inline Pose se3_compose(const Pose& base, const Vec6& delta) {
  if (delta.isZero(0.0)) return base;
  return se3_exp(delta) * base;
}

/// Left Jacobian of SE(3) in (w, rho) ordering: exp(xi + d) ~= exp(J d) exp(xi).
inline Mat6 se3_left_jacobian(const Vec6& xi) {
  const Vec3 w = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  const Mat3 Jl = so3_left_jacobian(w);
  const Mat3 P = hat(w);
  const Mat3 Rh = hat(rho);
  const double theta2 = w.squaredNorm();
  Mat3 Q;
  if (theta2 < 1e-6) {
    Q = 0.5 * Rh + (P * Rh + Rh * P + P * Rh * P) / 6.0 +
        (P * P * Rh + Rh * P * P - 3.0 * P * Rh * P) / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    const double a = (theta - s) / (theta2 * theta);
    const double b = (0.5 * theta2 + c - 1.0) / (theta2 * theta2);
    const double d = 0.5 * (b + 3.0 * (theta - s - theta2 * theta / 6.0) / (theta2 * theta2 * theta));
    Q = 0.5 * Rh + a * (P * Rh + Rh * P + P * Rh * P) +
        b * (P * P * Rh + Rh * P * P - 3.0 * P * Rh * P) +
        d * (P * Rh * P * P + P * P * Rh * P);
  }
  Mat6 J = Mat6::Zero();
  J.block<3, 3>(0, 0) = Jl;
  J.block<3, 3>(3, 3) = Jl;
  J.block<3, 3>(3, 0) = Q;
  return J;
}

/// Hamilton quaternion, w-first, of a rotation matrix.
inline Eigen::Vector4d rotation_to_quaternion(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return {q.w(), q.x(), q.y(), q.z()};
}

inline Mat3 quaternion_to_rotation(const Eigen::Vector4d& wxyz) {
  Eigen::Quaterniond q(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
  q.normalize();
  return q.toRotationMatrix();
}

// ---------------------------------------------------------------------------
// Pinhole camera

struct CameraIntrinsics {
  double focal_x = 1.0;
  double focal_y = 1.0;
  Vec2 principal_point = Vec2::Zero();
  int width = 0;
  int height = 0;

  static CameraIntrinsics centered(double focal, int width, int height) {
    return {focal, focal, Vec2(0.5 * width, 0.5 * height), width, height};
  }

  Mat3 matrix() const {
    Mat3 K;
    K << focal_x, 0.0, principal_point.x(), 0.0, focal_y, principal_point.y(), 0.0, 0.0, 1.0;
    return K;
  }

  Vec3 unproject(const Vec2& px) const {
    return {(px.x() - principal_point.x()) / focal_x, (px.y() - principal_point.y()) / focal_y, 1.0};
  }

  Vec2 apply(const Vec3& cam) const {
    return {focal_x * cam.x() / cam.z() + principal_point.x(),
            focal_y * cam.y() / cam.z() + principal_point.y()};
  }

  bool contains(const Vec2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width && px.y() <= height;
  }

  /// Same field of view resampled to a new image size.
  CameraIntrinsics resized(int new_width, int new_height) const {
    const double sx = static_cast<double>(new_width) / width;
    const double sy = static_cast<double>(new_height) / height;
    return {focal_x * sx, focal_y * sy, Vec2(principal_point.x() * sx, principal_point.y() * sy),
            new_width, new_height};
  }

  bool valid() const {
    return focal_x > 0.0 && focal_y > 0.0 && (width <= 0 || contains(principal_point));
  }
};

/// Projection that reports a cheirality violation as nullopt.
inline std::optional<Vec2> try_project(const CameraIntrinsics& K, const Pose& T, const Vec3& X) {
  const Vec3 p = T.transform(X);
  if (!(p.z() > kDepthEpsilon)) return std::nullopt;
  return K.apply(p);
}

inline Vec2 project(const CameraIntrinsics& K, const Pose& T, const Vec3& X) {
  auto px = try_project(K, T, X);
  if (!px) throw Error(ErrorKind::kNonPositiveDepth, "point at or behind the image plane");
  return *px;
}

}  // namespace jsfm

#pragma once

#include <array>

#include "jsfm/geometry.hpp"

namespace jsfm::sh {

inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                              -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                              0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                              -0.5900435899266435};

inline constexpr int coefficient_count(int degree) { return (degree + 1) * (degree + 1); }

struct Basis {
  std::array<double, 16> value{};
  std::array<Vec3, 16> gradient{};  // d value / d direction
};

/// Real spherical-harmonic basis up to `degree` (<= 3) at unit direction d,
/// in the ordering used by common splatting renderers.
inline Basis evaluate_basis(int degree, const Vec3& d) {
  Basis b;
  b.value[0] = kC0;
  b.gradient[0] = Vec3::Zero();
  if (degree < 1) return b;
  const double x = d.x(), y = d.y(), z = d.z();
  b.value[1] = -kC1 * y;
  b.gradient[1] = Vec3(0, -kC1, 0);
  b.value[2] = kC1 * z;
  b.gradient[2] = Vec3(0, 0, kC1);
  b.value[3] = -kC1 * x;
  b.gradient[3] = Vec3(-kC1, 0, 0);
  if (degree < 2) return b;
  const double xx = x * x, yy = y * y, zz = z * z;
  b.value[4] = kC2[0] * x * y;
  b.gradient[4] = Vec3(kC2[0] * y, kC2[0] * x, 0);
  b.value[5] = kC2[1] * y * z;
  b.gradient[5] = Vec3(0, kC2[1] * z, kC2[1] * y);
  b.value[6] = kC2[2] * (2 * zz - xx - yy);
  b.gradient[6] = Vec3(-2 * kC2[2] * x, -2 * kC2[2] * y, 4 * kC2[2] * z);
  b.value[7] = kC2[3] * x * z;
  b.gradient[7] = Vec3(kC2[3] * z, 0, kC2[3] * x);
  b.value[8] = kC2[4] * (xx - yy);
  b.gradient[8] = Vec3(2 * kC2[4] * x, -2 * kC2[4] * y, 0);
  if (degree < 3) return b;
  b.value[9] = kC3[0] * y * (3 * xx - yy);
  b.gradient[9] = Vec3(6 * kC3[0] * x * y, kC3[0] * (3 * xx - 3 * yy), 0);
  b.value[10] = kC3[1] * x * y * z;
  b.gradient[10] = Vec3(kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y);
  b.value[11] = kC3[2] * y * (4 * zz - xx - yy);
  b.gradient[11] = Vec3(-2 * kC3[2] * x * y, kC3[2] * (4 * zz - xx - 3 * yy), 8 * kC3[2] * y * z);
  b.value[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
  b.gradient[12] = Vec3(-6 * kC3[3] * x * z, -6 * kC3[3] * y * z, kC3[3] * (6 * zz - 3 * xx - 3 * yy));
  b.value[13] = kC3[4] * x * (4 * zz - xx - yy);
  b.gradient[13] = Vec3(kC3[4] * (4 * zz - 3 * xx - yy), -2 * kC3[4] * x * y, 8 * kC3[4] * x * z);
  b.value[14] = kC3[5] * z * (xx - yy);
  b.gradient[14] = Vec3(2 * kC3[5] * x * z, -2 * kC3[5] * y * z, kC3[5] * (xx - yy));
  b.value[15] = kC3[6] * x * (xx - 3 * yy);
  b.gradient[15] = Vec3(kC3[6] * (3 * xx - 3 * yy), -6 * kC3[6] * x * y, 0);
  return b;
}

}  // namespace jsfm::sh

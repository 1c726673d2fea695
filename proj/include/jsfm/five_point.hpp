#pragma once

// Minimal relative-pose solvers on calibrated (K^-1 applied) coordinates.
// Constraint convention: xb^T E xa = 0 with E = [t]x R and Xb = R Xa + t.

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "jsfm/geometry.hpp"

namespace jsfm {

using Mat9 = Eigen::Matrix<double, 9, 1>;

namespace detail {

/// Polynomial in (x, y, z) of total degree <= 3, one coefficient per monomial.
/// Monomial order: x^3 x^2y x^2z xy^2 xyz xz^2 y^3 y^2z yz^2 z^3 | x^2 xy xz y^2
/// yz z^2 x y z 1 -- the first ten are eliminated, the last ten form the
/// quotient-ring basis.
struct Poly3 {
  std::array<double, 20> c{};

  static const std::array<std::array<int, 3>, 20>& exponents() {
    static const std::array<std::array<int, 3>, 20> e = {{{3, 0, 0}, {2, 1, 0}, {2, 0, 1}, {1, 2, 0}, {1, 1, 1},
                                                          {1, 0, 2}, {0, 3, 0}, {0, 2, 1}, {0, 1, 2}, {0, 0, 3},
                                                          {2, 0, 0}, {1, 1, 0}, {1, 0, 1}, {0, 2, 0}, {0, 1, 1},
                                                          {0, 0, 2}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 0, 0}}};
    return e;
  }

  // (a, b, d) = exponents of x, y, z.
  static int index(int a, int b, int d) {
    struct Table {
      int v[4][4][4];
    };
    static const Table table = [] {
      Table t{};
      for (int k = 0; k < 20; ++k) {
        const auto& m = exponents()[k];
        t.v[m[0]][m[1]][m[2]] = k;
      }
      return t;
    }();
    return table.v[a][b][d];
  }

  static Poly3 linear(double x, double y, double z, double w) {
    Poly3 p;
    p.c[16] = x;
    p.c[17] = y;
    p.c[18] = z;
    p.c[19] = w;
    return p;
  }

  Poly3 operator+(const Poly3& o) const {
    Poly3 r;
    for (int k = 0; k < 20; ++k) r.c[k] = c[k] + o.c[k];
    return r;
  }
  Poly3 operator-(const Poly3& o) const {
    Poly3 r;
    for (int k = 0; k < 20; ++k) r.c[k] = c[k] - o.c[k];
    return r;
  }
  Poly3 operator*(double s) const {
    Poly3 r;
    for (int k = 0; k < 20; ++k) r.c[k] = c[k] * s;
    return r;
  }
  /// Product; terms beyond degree 3 must vanish by construction.
  Poly3 operator*(const Poly3& o) const {
    const auto& e = exponents();
    Poly3 r;
    for (int i = 0; i < 20; ++i) {
      if (c[i] == 0.0) continue;
      for (int j = 0; j < 20; ++j) {
        if (o.c[j] == 0.0) continue;
        const int a = e[i][0] + e[j][0], b = e[i][1] + e[j][1], d = e[i][2] + e[j][2];
        if (a + b + d > 3) continue;  // never hit: callers multiply within degree 3
        r.c[index(a, b, d)] += c[i] * o.c[j];
      }
    }
    return r;
  }
};

}  // namespace detail

/// Nister/Stewenius five-point solver: real essential matrices consistent
/// with five calibrated correspondences (up to ten). Uses the Groebner-basis
/// action matrix for multiplication by x instead of the tenth-degree
/// polynomial; both find the same roots.
inline std::vector<Mat3> solve_essential_five_point(const std::array<Vec3, 5>& xa, const std::array<Vec3, 5>& xb) {
  Eigen::Matrix<double, 5, 9> Q;
  for (int i = 0; i < 5; ++i) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) Q(i, 3 * r + c) = xb[i][r] * xa[i][c];
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 5, 9>> svd(Q, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 9> V = svd.matrixV();
  const Mat9 X = V.col(5), Y = V.col(6), Z = V.col(7), W = V.col(8);

  using detail::Poly3;
  Poly3 E[3][3];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const int k = 3 * r + c;
      E[r][c] = Poly3::linear(X[k], Y[k], Z[k], W[k]);
    }

  Eigen::Matrix<double, 10, 20> C;
  // det(E) = 0.
  const Poly3 det = E[0][0] * (E[1][1] * E[2][2] - E[1][2] * E[2][1]) -
                    E[0][1] * (E[1][0] * E[2][2] - E[1][2] * E[2][0]) +
                    E[0][2] * (E[1][0] * E[2][1] - E[1][1] * E[2][0]);
  for (int k = 0; k < 20; ++k) C(0, k) = det.c[k];
  // 2 E E^T E - tr(E E^T) E = 0.
  Poly3 EEt[3][3];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EEt[r][c] = E[r][0] * E[c][0] + E[r][1] * E[c][1] + E[r][2] * E[c][2];
  const Poly3 trace = EEt[0][0] + EEt[1][1] + EEt[2][2];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      Poly3 p = (EEt[r][0] * E[0][c] + EEt[r][1] * E[1][c] + EEt[r][2] * E[2][c]) * 2.0 - trace * E[r][c];
      for (int k = 0; k < 20; ++k) C(1 + 3 * r + c, k) = p.c[k];
    }
  }

  const Eigen::FullPivLU<Eigen::Matrix<double, 10, 10>> lu(C.leftCols<10>());
  if (!lu.isInvertible()) return {};
  const Eigen::Matrix<double, 10, 10> A = lu.solve(C.rightCols<10>());

  Eigen::Matrix<double, 10, 10> M = Eigen::Matrix<double, 10, 10>::Zero();
  M.topRows<6>() = -A.topRows<6>();
  M(6, 0) = 1.0;
  M(7, 1) = 1.0;
  M(8, 2) = 1.0;
  M(9, 6) = 1.0;

  Eigen::EigenSolver<Eigen::Matrix<double, 10, 10>> eig(M);
  std::vector<Mat3> out;
  for (int k = 0; k < 10; ++k) {
    if (std::abs(eig.eigenvalues()[k].imag()) > 1e-10 * std::max(1.0, std::abs(eig.eigenvalues()[k].real())))
      continue;
    const Eigen::Matrix<double, 10, 1> v = eig.eigenvectors().col(k).real();
    if (std::abs(v[9]) < 1e-14) continue;
    const double x = v[6] / v[9], y = v[7] / v[9], z = v[8] / v[9];
    const Mat9 e = x * X + y * Y + z * Z + W;
    Mat3 Em;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) Em(r, c) = e[3 * r + c];
    out.push_back(Em / Em.norm());
  }
  return out;
}

/// Hartley-normalized eight-point estimate of a matrix G with xb^T G xa = 0,
/// rank 2 enforced. Works on pixels (fundamental) or calibrated rays.
inline std::optional<Mat3> solve_eight_point(const std::vector<Vec2>& pa, const std::vector<Vec2>& pb) {
  const int n = static_cast<int>(pa.size());
  if (n < 8) return std::nullopt;
  auto normalizer = [n](const std::vector<Vec2>& p) {
    Vec2 mean = Vec2::Zero();
    for (const auto& q : p) mean += q;
    mean /= n;
    double dist = 0.0;
    for (const auto& q : p) dist += (q - mean).norm();
    dist /= n;
    const double s = dist > 0.0 ? std::sqrt(2.0) / dist : 1.0;
    Mat3 T;
    T << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
    return T;
  };
  const Mat3 Ta = normalizer(pa), Tb = normalizer(pb);
  Eigen::MatrixXd A(n, 9);
  for (int i = 0; i < n; ++i) {
    const Vec3 a = Ta * pa[i].homogeneous(), b = Tb * pb[i].homogeneous();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) A(i, 3 * r + c) = b[r] * a[c];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // Degenerate sample: the data constrain fewer than eight directions.
  if (n >= 8 && sv[7] < 1e-10 * sv[0]) return std::nullopt;
  const Mat9 f = svd.matrixV().col(8);
  Mat3 G;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) G(r, c) = f[3 * r + c];
  Eigen::JacobiSVD<Mat3> s2(G, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = s2.singularValues();
  d[2] = 0.0;
  G = Tb.transpose() * s2.matrixU() * d.asDiagonal() * s2.matrixV().transpose() * Ta;
  return G / G.norm();
}

/// Projects onto the essential manifold (singular values 1, 1, 0).
inline Mat3 nearest_essential(const Mat3& E) {
  Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * Vec3(1, 1, 0).asDiagonal() * svd.matrixV().transpose();
}

/// The four (R, t) factorizations of E, t unit length.
inline std::array<Pose, 4> decompose_essential(const Mat3& E) {
  Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU(), V = svd.matrixV();
  if (U.determinant() < 0) U = -U;
  if (V.determinant() < 0) V = -V;
  Mat3 Wm;
  Wm << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 R1 = U * Wm * V.transpose(), R2 = U * Wm.transpose() * V.transpose();
  const Vec3 t = U.col(2).normalized();
  return {Pose{R1, t}, Pose{R1, -t}, Pose{R2, t}, Pose{R2, -t}};
}

struct TwoViewPoint {
  Vec3 point;  // in frame a
  double depth_a;
  double depth_b;
  double angle;  // triangulation angle, radians
};

/// Midpoint triangulation of calibrated rays xa (frame a, camera at origin)
/// and xb (frame b, with Xb = R Xa + t).
inline TwoViewPoint triangulate_midpoint(const Pose& rel, const Vec3& xa, const Vec3& xb) {
  const Vec3 cb = rel.center();
  const Vec3 da = xa.normalized(), db = (rel.rotation.transpose() * xb).normalized();
  // Solve [da, -db] [la; lb] = cb in least squares.
  const double a = da.dot(da), b = da.dot(db), c = db.dot(db);
  const double d = da.dot(cb), e = db.dot(cb);
  const double den = a * c - b * b;
  TwoViewPoint out;
  if (std::abs(den) < 1e-14) {
    out.point = da * 1e12;
    out.depth_a = out.depth_b = 0.0;
    out.angle = 0.0;
    return out;
  }
  const double la = (c * d - b * e) / den, lb = (b * d - a * e) / den;
  out.point = 0.5 * (la * da + cb + lb * db);
  out.depth_a = out.point.z();
  out.depth_b = rel.transform(out.point).z();
  out.angle = std::acos(std::clamp(da.dot(db), -1.0, 1.0));
  return out;
}

}  // namespace jsfm

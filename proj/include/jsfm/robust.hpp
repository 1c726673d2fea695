#pragma once

#include <cmath>

#include "jsfm/error.hpp"

namespace jsfm {

/// Robust kernels act on the squared residual s = |r|^2.
///   huber:          rho(s) = s                 for s <= delta^2
///                   rho(s) = 2 delta sqrt(s) - delta^2 otherwise
///   geman_mcclure:  rho(s) = s / (s + sigma^2)
///   cauchy:         rho(s) = c^2 log(1 + s / c^2)
/// The IRLS weight is rho'(s) / rho'(0), which lies in (0, 1].
struct RobustKernel {
  enum class Kind { kHuber, kGemanMcClure, kCauchy };

  Kind kind = Kind::kHuber;
  double scale = 1.0;

  static RobustKernel huber(double delta) { return {Kind::kHuber, delta}; }
  static RobustKernel geman_mcclure(double sigma) { return {Kind::kGemanMcClure, sigma}; }
  static RobustKernel cauchy(double c) { return {Kind::kCauchy, c}; }

  struct Evaluation {
    double value;
    double weight;
  };

  Evaluation evaluate(double squared_residual) const {
    require(scale > 0.0, ErrorKind::kInvalidArgument, "robust kernel scale must be positive");
    const double s = squared_residual < 0.0 ? 0.0 : squared_residual;
    const double k2 = scale * scale;
    switch (kind) {
      case Kind::kHuber: {
        if (s <= k2) return {s, 1.0};
        const double r = std::sqrt(s);
        return {2.0 * scale * r - k2, scale / r};
      }
      case Kind::kGemanMcClure: {
        const double d = s + k2;
        return {s / d, (k2 * k2) / (d * d)};
      }
      case Kind::kCauchy: {
        return {k2 * std::log1p(s / k2), 1.0 / (1.0 + s / k2)};
      }
    }
    return {s, 1.0};
  }

  double value(double squared_residual) const { return evaluate(squared_residual).value; }
  double weight(double squared_residual) const { return evaluate(squared_residual).weight; }

  /// rho'(s), the unnormalized derivative with respect to the squared residual.
  double derivative(double squared_residual) const {
    const double w = weight(squared_residual);
    if (kind == Kind::kGemanMcClure) return w / (scale * scale);
    return w;
  }
};

}  // namespace jsfm

#include <gtest/gtest.h>

#include <numbers>

#include "jsfm/geometry.hpp"
#include "jsfm/rng.hpp"
#include "jsfm/robust.hpp"

using namespace jsfm;

namespace {

constexpr double kPi = std::numbers::pi;

TEST(So3, LogOfIdentityIsZero) { EXPECT_EQ(so3_log(Mat3::Identity()), Vec3::Zero()); }

TEST(So3, LogOfQuarterTurnAboutZ) {
  Mat3 R;
  R << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_TRUE(so3_log(R).isApprox(Vec3(0, 0, kPi / 2), 1e-12));
}

TEST(So3, ExpOfZeroIsIdentity) { EXPECT_EQ(so3_exp(Vec3::Zero()), Mat3::Identity()); }

TEST(So3, QuarterTurnMapsXToY) {
  const Vec3 y = so3_exp(Vec3(0, 0, kPi / 2)) * Vec3::UnitX();
  EXPECT_NEAR((y - Vec3::UnitY()).norm(), 0.0, 1e-15);
}

TEST(So3, ExpLogRoundTripOverRandomRotations) {
  Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Mat3 R = rng.rotation();
    const Vec3 w = so3_log(R);
    EXPECT_LE(w.norm(), kPi + 1e-12);
    worst = std::max(worst, (so3_exp(w) - R).norm());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(So3, RoundTripNearPi) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 axis = rng.unit_vector();
    const double angle = kPi - std::pow(10.0, -rng.uniform(0.0, 12.0));
    const Mat3 R = so3_exp(angle * axis);
    EXPECT_LT((so3_exp(so3_log(R)) - R).norm(), 1e-9);
  }
  // Exactly pi: axis is recovered up to sign, deterministically.
  const Mat3 R = so3_exp(kPi * Vec3(0, 1, 0));
  const Vec3 w = so3_log(R);
  EXPECT_NEAR(w.norm(), kPi, 1e-12);
  EXPECT_LT((so3_exp(w) - R).norm(), 1e-9);
  EXPECT_EQ(so3_log(R), w);
}

TEST(So3, SmallAngleTaylorBound) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = rng.unit_vector() * rng.uniform(0.0, 1e-3);
    EXPECT_LE((so3_exp(w) - (Mat3::Identity() + hat(w))).norm(), w.squaredNorm());
  }
}

TEST(So3, LeftJacobianMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 w = rng.unit_vector() * rng.uniform(0.0, 3.0);
    const Mat3 J = so3_left_jacobian(w);
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      const Vec3 d = Vec3::Unit(k) * h;
      const Vec3 fd = so3_log(so3_exp(w + d) * so3_exp(w).transpose()) / h;
      EXPECT_LT((fd - J.col(k)).norm(), 1e-5);
    }
    EXPECT_LT((so3_left_jacobian_inverse(w) * J - Mat3::Identity()).norm(), 1e-9);
  }
}

TEST(Se3, ZeroTwistReturnsBaseExactly) {
  Rng rng(2);
  const Pose T{rng.rotation(), Vec3(1, -2, 3)};
  const Pose out = se3_compose(T, Vec6::Zero());
  EXPECT_EQ(out.rotation, T.rotation);
  EXPECT_EQ(out.translation, T.translation);
}

TEST(Se3, PureTranslationTwist) {
  Vec6 xi;
  xi << 0, 0, 0, 1, 2, 3;
  const Pose out = se3_compose(Pose::identity(), xi);
  EXPECT_TRUE(out.rotation.isApprox(Mat3::Identity()));
  EXPECT_TRUE(out.translation.isApprox(Vec3(1, 2, 3)));
}

TEST(Se3, InverseTwistRoundTrip) {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const Pose T{rng.rotation(), Vec3(rng.normal(), rng.normal(), rng.normal())};
    Vec6 d;
    for (int k = 0; k < 6; ++k) d[k] = rng.normal(0.0, 0.5);
    const Pose back = se3_compose(se3_compose(T, d), -d);
    EXPECT_LT((back.rotation - T.rotation).norm(), 1e-9);
    EXPECT_LT((back.translation - T.translation).norm(), 1e-9);
  }
}

TEST(Se3, PoseComposedWithInverseIsIdentity) {
  Rng rng(6);
  const Pose T{rng.rotation(), Vec3(0.3, 4, -1)};
  const Pose I = T * T.inverse();
  EXPECT_LT((I.rotation - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT(I.translation.norm(), 1e-9);
  EXPECT_TRUE(T.center().allFinite());
}

TEST(Se3, LeftJacobianMatchesFiniteDifferences) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Vec6 xi;
    for (int k = 0; k < 3; ++k) xi[k] = rng.normal(0.0, trial < 10 ? 1e-4 : 0.8);
    for (int k = 3; k < 6; ++k) xi[k] = rng.normal(0.0, 1.0);
    const Mat6 J = se3_left_jacobian(xi);
    const Pose T = se3_exp(xi);
    const double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
      const Pose Tp = se3_exp(xi + Vec6::Unit(k) * h);
      const Vec6 fd = se3_log(Tp * T.inverse()) / h;
      EXPECT_LT((fd - J.col(k)).norm(), 2e-5) << "trial " << trial << " column " << k;
    }
  }
}

TEST(Projection, OpticalAxis) {
  const CameraIntrinsics K{1, 1, Vec2(0, 0), 0, 0};
  EXPECT_TRUE(project(K, Pose::identity(), Vec3(0, 0, 2)).isApprox(Vec2(0, 0)));
  EXPECT_TRUE(project(K, Pose::identity(), Vec3(2, 4, 2)).isApprox(Vec2(1, 2)));
}

TEST(Projection, PrincipalPointOffset) {
  const CameraIntrinsics K{100, 100, Vec2(320, 240), 640, 480};
  EXPECT_TRUE(project(K, Pose::identity(), Vec3(0.5, 0, 1)).isApprox(Vec2(370, 240)));
}

TEST(Projection, BehindCameraThrows) {
  const CameraIntrinsics K{100, 100, Vec2(320, 240), 640, 480};
  try {
    project(K, Pose::identity(), Vec3(0, 0, -1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonPositiveDepth);
  }
  EXPECT_FALSE(try_project(K, Pose::identity(), Vec3(0, 0, 0)).has_value());
}

TEST(Projection, UnprojectReprojectProperty) {
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const CameraIntrinsics K{rng.uniform(50, 900), rng.uniform(50, 900),
                             Vec2(rng.uniform(100, 500), rng.uniform(100, 400)), 640, 480};
    const Pose T{rng.rotation(), Vec3(rng.normal(), rng.normal(), rng.normal())};
    const Vec2 px(rng.uniform(0, 640), rng.uniform(0, 480));
    const double depth = rng.uniform(0.1, 50.0);
    const Vec3 X = T.inverse().transform(K.unproject(px) * depth);
    EXPECT_LT((project(K, T, X) - px).norm(), 1e-9);
  }
}

TEST(RobustKernel, GemanMcClureHalfAtScale) {
  EXPECT_DOUBLE_EQ(RobustKernel::geman_mcclure(0.7).value(0.49), 0.5);
}

TEST(RobustKernel, HuberQuadraticAndLinearRegions) {
  const auto h = RobustKernel::huber(1.0);
  EXPECT_DOUBLE_EQ(h.value(0.25), 0.25);
  // Scalar reference: 2 * delta * |r| - delta^2 with |r| = 2.
  const double reference = 2.0 * 1.0 * 2.0 - 1.0;
  EXPECT_DOUBLE_EQ(h.value(4.0), reference);
  EXPECT_DOUBLE_EQ(h.value(4.0), 3.0);
  EXPECT_DOUBLE_EQ(h.weight(0.0), 1.0);
}

TEST(RobustKernel, Properties) {
  const RobustKernel kernels[] = {RobustKernel::huber(1.5), RobustKernel::geman_mcclure(0.3),
                                  RobustKernel::cauchy(2.0)};
  for (const auto& k : kernels) {
    EXPECT_EQ(k.value(0.0), 0.0);
    double prev = 0.0;
    for (double s = 0.0; s < 1e4; s = s * 1.3 + 0.01) {
      const auto e = k.evaluate(s);
      EXPECT_GE(e.value, prev);
      EXPECT_GT(e.weight, 0.0);
      EXPECT_LE(e.weight, 1.0);
      prev = e.value;
      // Derivative consistency with a central difference.
      const double h = 1e-6 * (1.0 + s);
      if (s > h) {
        const double fd = (k.value(s + h) - k.value(s - h)) / (2 * h);
        EXPECT_NEAR(k.derivative(s), fd, 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
  }
  const auto gm = RobustKernel::geman_mcclure(0.5);
  EXPECT_LT(gm.value(1e300), 1.0 + 1e-15);
  EXPECT_LT(gm.value(1e12), 1.0);
  EXPECT_LT(gm.weight(1e8), 1e-12);
  EXPECT_LT(RobustKernel::cauchy(1.0).weight(1e8), 1e-7);
  const auto hub = RobustKernel::huber(2.0);
  for (double s = 0.0; s <= 4.0; s += 0.1) EXPECT_EQ(hub.value(s), s);
}

}  // namespace

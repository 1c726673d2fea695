#include <gtest/gtest.h>

#include "jsfm/metrics.hpp"
#include "jsfm/rng.hpp"
#include "jsfm/rotation_averaging.hpp"

using namespace jsfm;

namespace {

std::vector<Mat3> random_rotations(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Mat3> R;
  for (int i = 0; i < n; ++i) R.push_back(rng.rotation());
  return R;
}

RelativeRotation exact_edge(const std::vector<Mat3>& R, int i, int j, double w = 1.0) {
  return {i, j, R[j] * R[i].transpose(), w};
}

std::vector<RelativeRotation> complete_graph(const std::vector<Mat3>& R) {
  std::vector<RelativeRotation> e;
  for (int i = 0; i < static_cast<int>(R.size()); ++i)
    for (int j = i + 1; j < static_cast<int>(R.size()); ++j) e.push_back(exact_edge(R, i, j));
  return e;
}

RotationErrors errors(const RotationMap& est, const std::vector<Mat3>& gt) {
  std::vector<Pose> a, b;
  for (int i = 0; i < static_cast<int>(gt.size()); ++i) {
    a.push_back({est.at(i), Vec3::Zero()});
    b.push_back({gt[i], Vec3::Zero()});
  }
  return rotation_error(a, b);
}

TEST(RotationMst, TreeIsExact) {
  const auto R = random_rotations(6, 1);
  std::vector<RelativeRotation> tree = {exact_edge(R, 0, 1), exact_edge(R, 1, 2), exact_edge(R, 1, 3),
                                        exact_edge(R, 4, 3), exact_edge(R, 5, 0)};
  const auto init = init_rotations_mst(tree, 0);
  EXPECT_EQ(init.at(0), Mat3::Identity());
  for (const auto& e : tree) EXPECT_LT(detail::rotation_residual(e, init.at(e.i), init.at(e.j)).norm(), 1e-12);
  EXPECT_LT(errors(init, R).summary.max, 1e-10);
}

TEST(RotationMst, IgnoresLowWeightCorruptedEdge) {
  const auto R = random_rotations(3, 2);
  std::vector<RelativeRotation> g = {exact_edge(R, 0, 1, 100), exact_edge(R, 1, 2, 90), exact_edge(R, 0, 2, 10)};
  g[2].R = so3_exp(Vec3(0.5, -0.3, 0.2)) * g[2].R;
  const auto init = init_rotations_mst(g, 0);
  EXPECT_LT(errors(init, R).summary.max, 1e-10);
}

TEST(RotationMst, DisconnectedGraph) {
  const auto R = random_rotations(4, 3);
  try {
    init_rotations_mst({exact_edge(R, 0, 1), exact_edge(R, 2, 3)}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDisconnectedGraph);
  }
}

TEST(RotationIrls, ResidualJacobianMatchesFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 Ri = rng.rotation(), Rj = rng.rotation();
    const RelativeRotation e{0, 1, so3_exp(0.3 * rng.unit_vector()) * Rj * Ri.transpose(), 1.0};
    const Vec3 r = detail::rotation_residual(e, Ri, Rj);
    const Mat3 J = so3_right_jacobian_inverse(r) * Ri;
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      const Vec3 d = Vec3::Unit(k) * h;
      const Vec3 fdj = (detail::rotation_residual(e, Ri, Rj * so3_exp(d)) -
                        detail::rotation_residual(e, Ri, Rj * so3_exp(-d))) / (2 * h);
      const Vec3 fdi = (detail::rotation_residual(e, Ri * so3_exp(d), Rj) -
                        detail::rotation_residual(e, Ri * so3_exp(-d), Rj)) / (2 * h);
      EXPECT_LT((fdj - J.col(k)).norm(), 1e-7);
      EXPECT_LT((fdi + J.col(k)).norm(), 1e-7);
    }
  }
}

TEST(RotationIrls, NoiseFreeCompleteGraph) {
  const auto R = random_rotations(10, 5);
  auto edges = complete_graph(R);
  // Start away from the optimum: perturb the spanning-tree initialization.
  auto init = init_rotations_mst(edges, 0);
  Rng rng(6);
  for (auto& [v, Rv] : init)
    if (v != 0) Rv = so3_exp(deg2rad(3.0) * rng.unit_vector()) * Rv;
  const auto res = refine_rotations_irls(edges, init);
  EXPECT_EQ(res.rotations.at(0), Mat3::Identity());
  EXPECT_LT(deg2rad(errors(res.rotations, R).summary.max), 1e-6);
}

TEST(RotationIrls, RobustToOutlierEdges) {
  const int n = 20;
  const auto R = random_rotations(n, 7);
  auto edges = complete_graph(R);
  Rng rng(8);
  std::vector<bool> outlier(edges.size(), false);
  for (size_t k = 0; k < edges.size(); ++k) {
    if (rng.uniform() < 0.3) {
      edges[k].R = rng.rotation();
      outlier[k] = true;
    } else {
      edges[k].R = so3_exp(deg2rad(1.0) * Vec3(rng.normal(), rng.normal(), rng.normal()) / std::sqrt(3.0)) *
                   edges[k].R;
    }
  }
  const auto res = average_rotations([&] {
    ViewGraph g;
    for (const auto& e : edges) {
      ViewGraphEdge ve;
      ve.i = e.i;
      ve.j = e.j;
      ve.relative.rotation = e.R;
      ve.inliers.assign(100, 0);
      g.edges.push_back(ve);
    }
    for (int i = 0; i < n; ++i) g.vertices.push_back(i);
    return g;
  }());
  EXPECT_LT(errors(res.rotations, R).summary.mean, 0.5);
  for (size_t k = 0; k < edges.size(); ++k) {
    const double err = detail::rotation_residual(edges[k], res.rotations.at(edges[k].i),
                                                 res.rotations.at(edges[k].j)).norm();
    if (outlier[k] && err > deg2rad(10.0)) EXPECT_LT(res.edge_weights[k], 0.1);
  }
}

TEST(RotationIrls, ObjectiveNonIncreasingPerSigma) {
  const auto R = random_rotations(12, 9);
  auto edges = complete_graph(R);
  Rng rng(10);
  for (auto& e : edges) e.R = so3_exp(deg2rad(2.0) * rng.unit_vector()) * e.R;
  const auto res = refine_rotations_irls(edges, init_rotations_mst(edges, 0));
  ASSERT_GT(res.history.size(), 2u);
  for (size_t k = 1; k < res.history.size(); ++k) {
    if (res.history[k].second == res.history[k - 1].second)
      EXPECT_LE(res.history[k].first, res.history[k - 1].first + 1e-15);
  }
}

TEST(RotationIrls, OptimalInitIsFixedPoint) {
  const auto R = random_rotations(8, 11);
  const auto edges = complete_graph(R);
  RotationMap init;
  for (int i = 0; i < 8; ++i) init[i] = R[i] * R[0].transpose();
  const auto res = refine_rotations_irls(edges, init);
  for (int i = 0; i < 8; ++i) EXPECT_LT((res.rotations.at(i) - init.at(i)).norm(), 1e-9);
}

TEST(RotationIrls, AnchorChoiceIsAGauge) {
  const auto R = random_rotations(9, 12);
  auto edges = complete_graph(R);
  Rng rng(13);
  for (auto& e : edges) e.R = so3_exp(deg2rad(0.5) * rng.unit_vector()) * e.R;
  RotationAveragingOptions a, b;
  a.anchor = 0;
  b.anchor = 5;
  const auto ra = refine_rotations_irls(edges, init_rotations_mst(edges, 0), a);
  const auto rb = refine_rotations_irls(edges, init_rotations_mst(edges, 5), b);
  EXPECT_EQ(rb.rotations.at(5), Mat3::Identity());
  const auto ea = errors(ra.rotations, R), eb = errors(rb.rotations, R);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(ea.per_camera_deg[i], eb.per_camera_deg[i], 1e-6);
}

}  // namespace

#pragma once

// Global rotation averaging: maximum-spanning-tree initialization, an l1
// bootstrap and Geman-McClure IRLS in the tangent space.

#include <algorithm>
#include <map>
#include <numeric>
#include <queue>
#include <vector>

#include <Eigen/Sparse>

#include "jsfm/error.hpp"
#include "jsfm/geometry.hpp"
#include "jsfm/robust.hpp"
#include "jsfm/viewgraph.hpp"

namespace jsfm {

/// R_ij maps camera-i orientation to camera-j: R_j ~= R_ij R_i.
struct RelativeRotation {
  int i = -1;
  int j = -1;
  Mat3 R = Mat3::Identity();
  double weight = 1.0;  // inlier count, used only by the spanning tree
};

inline std::vector<RelativeRotation> relative_rotations(const ViewGraph& g) {
  std::vector<RelativeRotation> out;
  for (const auto& e : g.edges) out.push_back({e.i, e.j, e.R(), static_cast<double>(e.inlier_count())});
  return out;
}

using RotationMap = std::map<int, Mat3>;

namespace detail {

inline std::vector<int> vertices_of(const std::vector<RelativeRotation>& edges) {
  std::vector<int> v;
  for (const auto& e : edges) {
    v.push_back(e.i);
    v.push_back(e.j);
  }
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

/// Residual of one edge: log(R_ij^T R_j R_i^T).
inline Vec3 rotation_residual(const RelativeRotation& e, const Mat3& Ri, const Mat3& Rj) {
  return so3_log(e.R.transpose() * Rj * Ri.transpose());
}

}  // namespace detail

/// Chains relative rotations along the maximum spanning tree (weights =
/// inlier counts, ties to the lower edge index) from the anchor.
inline RotationMap init_rotations_mst(const std::vector<RelativeRotation>& edges, int anchor) {
  const auto vertices = detail::vertices_of(edges);
  require(std::binary_search(vertices.begin(), vertices.end(), anchor), ErrorKind::kInvalidArgument,
          "anchor is not a graph vertex");
  std::vector<int> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return edges[a].weight > edges[b].weight; });
  std::map<int, int> parent;
  for (int v : vertices) parent[v] = v;
  std::function<int(int)> find = [&](int v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
  std::map<int, std::vector<int>> adjacency;  // vertex -> tree edge indices
  for (int k : order) {
    const int a = find(edges[k].i), b = find(edges[k].j);
    if (a == b) continue;
    parent[a] = b;
    adjacency[edges[k].i].push_back(k);
    adjacency[edges[k].j].push_back(k);
  }
  RotationMap R;
  R[anchor] = Mat3::Identity();
  std::queue<int> frontier;
  frontier.push(anchor);
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int k : adjacency[v]) {
      const auto& e = edges[k];
      const int w = e.i == v ? e.j : e.i;
      if (R.count(w)) continue;
      R[w] = e.i == v ? Mat3(e.R * R[v]) : Mat3(e.R.transpose() * R[v]);
      frontier.push(w);
    }
  }
  require(R.size() == vertices.size(), ErrorKind::kDisconnectedGraph, "rotation graph is disconnected");
  return R;
}

inline RotationMap init_rotations_mst(const ViewGraph& g, int anchor) {
  return init_rotations_mst(relative_rotations(g), anchor);
}

struct RotationAveragingOptions {
  int anchor = -1;  // -1: smallest vertex id
  int l1_iters = 10;
  double l1_epsilon = 1e-6;
  double sigma_start_deg = 5.0;
  double sigma_end_deg = 1.0;
  double sigma_anneal = 0.5;
  int max_iters = 50;  // per robust round
  double tol = 1e-12;  // step norm
};

struct RotationAveragingResult {
  RotationMap rotations;
  std::vector<double> edge_weights;  // final normalized GM weights
  /// Objective of every accepted iterate of the GM phase, with the sigma in force.
  std::vector<std::pair<double, double>> history;
  int iterations = 0;
};

/// Robust objective sum rho_GM(|e|^2; sigma) over edges.
inline double rotation_objective(const std::vector<RelativeRotation>& edges, const RotationMap& R, double sigma) {
  const auto k = RobustKernel::geman_mcclure(sigma);
  double total = 0.0;
  for (const auto& e : edges) total += k.value(detail::rotation_residual(e, R.at(e.i), R.at(e.j)).squaredNorm());
  return total;
}

namespace detail {

inline double l1_objective(const std::vector<RelativeRotation>& edges, const RotationMap& R) {
  double total = 0.0;
  for (const auto& e : edges) total += rotation_residual(e, R.at(e.i), R.at(e.j)).norm();
  return total;
}

/// One weighted Gauss-Newton step with right perturbations R_i <- R_i exp(phi_i):
/// de/dphi_j = Jr^-1(e) R_i, de/dphi_i = -Jr^-1(e) R_i.
template <typename WeightFn>
Eigen::VectorXd rotation_step(const std::vector<RelativeRotation>& edges, const RotationMap& R,
                              const std::map<int, int>& index, int n_par, WeightFn&& weight) {
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n_par);
  for (const auto& e : edges) {
    const Mat3& Ri = R.at(e.i);
    const Vec3 r = rotation_residual(e, Ri, R.at(e.j));
    const double w = weight(r);
    const Mat3 J = so3_right_jacobian_inverse(r) * Ri;
    const int bi = index.at(e.i), bj = index.at(e.j);
    const std::array<std::pair<int, Mat3>, 2> blocks = {std::pair{bi, Mat3(-J)}, std::pair{bj, J}};
    for (const auto& [a, Ja] : blocks) {
      if (a < 0) continue;
      g.segment<3>(3 * a) += w * Ja.transpose() * r;
      for (const auto& [b, Jb] : blocks) {
        if (b < 0) continue;
        const Mat3 H = w * Ja.transpose() * Jb;
        for (int p = 0; p < 3; ++p)
          for (int q = 0; q < 3; ++q) trip.emplace_back(3 * a + p, 3 * b + q, H(p, q));
      }
    }
  }
  Eigen::SparseMatrix<double> H(n_par, n_par);
  H.setFromTriplets(trip.begin(), trip.end());
  // Tiny Tikhonov term keeps vertices whose edges all have ~zero weight solvable.
  for (int k = 0; k < n_par; ++k) H.coeffRef(k, k) += 1e-12;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(H);
  if (solver.info() != Eigen::Success) return Eigen::VectorXd::Zero(n_par);
  Eigen::VectorXd step = -solver.solve(g);
  if (!step.allFinite()) step.setZero();
  return step;
}

inline RotationMap apply_rotation_step(const RotationMap& R, const std::map<int, int>& index,
                                       const Eigen::VectorXd& step, double scale) {
  RotationMap out = R;
  for (auto& [v, Rv] : out) {
    const int b = index.at(v);
    if (b >= 0) Rv = nearest_rotation(Rv * so3_exp(scale * Vec3(step.segment<3>(3 * b))));
  }
  return out;
}

}  // namespace detail

/// l1 bootstrap followed by annealed Geman-McClure IRLS. Each step is
/// accepted only if it does not increase the objective of its phase
/// (backtracking by halving). The anchor stays at identity.
inline RotationAveragingResult refine_rotations_irls(const std::vector<RelativeRotation>& edges,
                                                     const RotationMap& init,
                                                     const RotationAveragingOptions& opt = {}) {
  const auto vertices = detail::vertices_of(edges);
  for (int v : vertices) require(init.count(v) > 0, ErrorKind::kInvalidArgument, "initial rotation missing");
  const int anchor = opt.anchor >= 0 ? opt.anchor : vertices.front();
  std::map<int, int> index;
  int n_par = 0;
  for (int v : vertices) index[v] = v == anchor ? -1 : n_par++;
  n_par *= 3;

  RotationAveragingResult res;
  RotationMap R;
  for (int v : vertices) R[v] = init.at(v);
  // Re-express in the anchor gauge.
  const Mat3 gauge = R[anchor].transpose();
  for (auto& [v, Rv] : R) Rv = nearest_rotation(Rv * gauge);
  R[anchor] = Mat3::Identity();

  auto descend = [&](auto&& objective, auto&& weight, int iters) {
    double cost = objective(R);
    for (int it = 0; it < iters; ++it) {
      const Eigen::VectorXd step = detail::rotation_step(edges, R, index, n_par, weight);
      if (step.norm() < opt.tol) break;
      bool accepted = false;
      for (double scale = 1.0; scale > 1e-3 && !accepted; scale *= 0.5) {
        RotationMap cand = detail::apply_rotation_step(R, index, step, scale);
        const double c = objective(cand);
        if (c <= cost) {
          R = std::move(cand);
          cost = c;
          accepted = true;
        }
      }
      ++res.iterations;
      if (!accepted) break;
      if (step.norm() < opt.tol) break;
    }
    return cost;
  };

  if (n_par > 0) {
    descend([&](const RotationMap& m) { return detail::l1_objective(edges, m); },
            [&](const Vec3& r) { return 1.0 / std::max(r.norm(), opt.l1_epsilon); }, opt.l1_iters);

    double sigma = deg2rad(opt.sigma_start_deg);
    const double sigma_end = deg2rad(opt.sigma_end_deg);
    while (true) {
      const auto kernel = RobustKernel::geman_mcclure(sigma);
      const double s = sigma;
      res.history.emplace_back(rotation_objective(edges, R, s), s);
      double cost = rotation_objective(edges, R, s);
      for (int it = 0; it < opt.max_iters; ++it) {
        const Eigen::VectorXd step = detail::rotation_step(
            edges, R, index, n_par, [&](const Vec3& r) { return kernel.weight(r.squaredNorm()); });
        ++res.iterations;
        if (step.norm() < opt.tol) break;
        bool accepted = false;
        for (double scale = 1.0; scale > 1e-3 && !accepted; scale *= 0.5) {
          RotationMap cand = detail::apply_rotation_step(R, index, step, scale);
          const double c = rotation_objective(edges, cand, s);
          if (c <= cost) {
            R = std::move(cand);
            cost = c;
            accepted = true;
            res.history.emplace_back(c, s);
          }
        }
        if (!accepted) break;
      }
      if (sigma <= sigma_end * (1.0 + 1e-12)) break;
      sigma = std::max(sigma * opt.sigma_anneal, sigma_end);
    }
  }

  const auto final_kernel = RobustKernel::geman_mcclure(deg2rad(opt.sigma_end_deg));
  for (const auto& e : edges)
    res.edge_weights.push_back(final_kernel.weight(detail::rotation_residual(e, R[e.i], R[e.j]).squaredNorm()));
  res.rotations = std::move(R);
  return res;
}

/// MST initialization followed by robust refinement.
inline RotationAveragingResult average_rotations(const ViewGraph& g, const RotationAveragingOptions& opt = {}) {
  const auto edges = relative_rotations(g);
  require(!edges.empty(), ErrorKind::kEmptyGraph, "no edges for rotation averaging");
  RotationAveragingOptions o = opt;
  if (o.anchor < 0) o.anchor = detail::vertices_of(edges).front();
  return refine_rotations_irls(edges, init_rotations_mst(edges, o.anchor), o);
}

}  // namespace jsfm

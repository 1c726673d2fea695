#pragma once

// Global positioning: camera centers and points with rotations held fixed,
// minimizing the distance of each point to its viewing rays.

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <vector>

#include <Eigen/Dense>

#include "jsfm/error.hpp"
#include "jsfm/geometry.hpp"
#include "jsfm/parallel.hpp"
#include "jsfm/rotation_averaging.hpp"
#include "jsfm/types.hpp"
#include "jsfm/viewgraph.hpp"

namespace jsfm {

/// World-frame unit viewing direction of pixel px.
inline Vec3 bearing(const CameraIntrinsics& K, const Mat3& R, const Vec2& px) {
  return (R.transpose() * K.unproject(px)).normalized();
}

/// (I - b b^T)(X - c): the component of X - c orthogonal to the ray.
inline Vec3 ray_residual(const Vec3& b, const Vec3& c, const Vec3& X) {
  const Vec3 d = X - c;
  return d - b * b.dot(d);
}

inline Mat3 ray_projector(const Vec3& b) { return Mat3::Identity() - b * b.transpose(); }

/// Unit direction between two cameras expressed in camera j: the center of
/// camera i sits along t_ij as seen from camera j.
struct RelativeDirection {
  int i = -1;
  int j = -1;
  Vec3 t_ij = Vec3::UnitZ();
  double weight = 1.0;
};

/// Pairwise directions of all edges with usable parallax.
inline std::vector<RelativeDirection> relative_directions(const ViewGraph& g) {
  std::vector<RelativeDirection> out;
  for (const auto& e : g.edges)
    if (!e.low_parallax) out.push_back({e.i, e.j, e.t(), static_cast<double>(e.inlier_count())});
  return out;
}

struct PositioningOptions {
  int anchor = -1;  // -1: smallest camera id
  int max_iters = 100;
  double tol = 1e-10;  // relative objective change
  double lambda_init = 1e-4;
  double low_parallax_deg = 1.0;
  int threads = 1;
};

struct PositioningResult {
  std::map<int, Pose> poses;
  std::vector<Track> tracks;  // surviving tracks with points, ids preserved
  int anchor = -1;
  int scale_camera = -1;  // |c_scale| is held at 1
  std::vector<double> history;  // objective of every accepted iterate (first = initial)
  int iterations = 0;
  double objective = 0.0;
};

namespace detail {

/// Max angle between any two bearings of a track (degrees).
inline double max_parallax_deg(const std::vector<Vec3>& b) {
  double best = 0.0;
  for (size_t p = 0; p < b.size(); ++p)
    for (size_t q = p + 1; q < b.size(); ++q)
      best = std::max(best, std::atan2(b[p].cross(b[q]).norm(), b[p].dot(b[q])));
  return rad2deg(best);
}

/// Midpoint of the closest points of two rays c + s b.
inline Vec3 ray_midpoint(const Vec3& ca, const Vec3& ba, const Vec3& cb, const Vec3& bb) {
  const Vec3 w = ca - cb;
  const double a = ba.dot(ba), b = ba.dot(bb), c = bb.dot(bb), d = ba.dot(w), e = bb.dot(w);
  const double den = a * c - b * b;
  if (std::abs(den) < 1e-15) return 0.5 * (ca + cb);
  const double s = (b * e - c * d) / den, u = (a * e - b * d) / den;
  return 0.5 * ((ca + s * ba) + (cb + u * bb));
}

/// Chains unit-length pairwise directions along the maximum spanning tree.
inline std::map<int, Vec3> chain_centers(const std::vector<RelativeDirection>& dirs, const RotationMap& R,
                                         const std::vector<int>& cameras, int anchor) {
  std::vector<int> order(dirs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dirs[a].weight > dirs[b].weight; });
  std::map<int, int> parent;
  for (int v : cameras) parent[v] = v;
  std::function<int(int)> find = [&](int v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
  std::map<int, std::vector<int>> adjacency;
  for (int k : order) {
    const auto& d = dirs[k];
    if (!parent.count(d.i) || !parent.count(d.j)) continue;
    const int a = find(d.i), b = find(d.j);
    if (a == b) continue;
    parent[a] = b;
    adjacency[d.i].push_back(k);
    adjacency[d.j].push_back(k);
  }
  std::map<int, Vec3> c;
  c[anchor] = Vec3::Zero();
  std::queue<int> frontier;
  frontier.push(anchor);
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int k : adjacency[v]) {
      const auto& d = dirs[k];
      const int w = d.i == v ? d.j : d.i;
      if (c.count(w)) continue;
      // c_i = c_j + R_j^T t_ij (unit baseline).
      const Vec3 dir = R.at(d.j).transpose() * d.t_ij.normalized();
      c[w] = d.i == v ? Vec3(c[v] - dir) : Vec3(c[v] + dir);
      frontier.push(w);
    }
  }
  require(c.size() == cameras.size(), ErrorKind::kDisconnectedGraph, "direction graph is disconnected");
  return c;
}

/// Orthonormal basis of the plane orthogonal to n.
inline Eigen::Matrix<double, 3, 2> tangent_basis(const Vec3& n) {
  const Vec3 u = n.normalized();
  const Vec3 a = std::abs(u.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = (a - u * u.dot(a)).normalized();
  Eigen::Matrix<double, 3, 2> B;
  B.col(0) = e1;
  B.col(1) = u.cross(e1);
  return B;
}

struct PosTrack {
  std::vector<int> cam;  // camera slot per observation
  std::vector<Vec3> b;
};

}  // namespace detail

/// Ray-orthogonal positioning with fixed rotations. The gauge holds the
/// anchor center at the origin and the camera farthest from it (in the
/// spanning-tree initialization) on the unit sphere. Points are eliminated
/// with a Schur complement inside Levenberg-Marquardt.
inline PositioningResult solve_positions(const RotationMap& rotations, const std::vector<Track>& tracks,
                                         const std::map<int, CameraIntrinsics>& K,
                                         const std::vector<RelativeDirection>& directions,
                                         const PositioningOptions& opt = {}) {
  std::vector<int> cameras;
  for (const auto& [v, R] : rotations) cameras.push_back(v);
  require(cameras.size() >= 2, ErrorKind::kInvalidArgument, "positioning needs at least two cameras");
  const int anchor = opt.anchor >= 0 ? opt.anchor : cameras.front();
  require(rotations.count(anchor) > 0, ErrorKind::kInvalidArgument, "anchor has no rotation");
  std::map<int, int> slot;
  for (size_t k = 0; k < cameras.size(); ++k) slot[cameras[k]] = static_cast<int>(k);
  const int n_cam = static_cast<int>(cameras.size());

  // Bearings; tracks without usable parallax are dropped.
  std::vector<detail::PosTrack> pt;
  std::vector<Track> kept;
  for (const auto& t : tracks) {
    detail::PosTrack p;
    Track out = t;
    out.observations.clear();
    for (const auto& o : t.observations) {
      if (!slot.count(o.image)) continue;
      p.cam.push_back(slot[o.image]);
      p.b.push_back(bearing(K.at(o.image), rotations.at(o.image), o.pixel));
      out.observations.push_back(o);
    }
    if (p.cam.size() < 2 || detail::max_parallax_deg(p.b) < opt.low_parallax_deg) continue;
    pt.push_back(std::move(p));
    kept.push_back(std::move(out));
  }
  require(!pt.empty(), ErrorKind::kTooFewPoints, "no track has enough parallax for positioning");

  // Initialization.
  const auto chained = detail::chain_centers(directions, rotations, cameras, anchor);
  std::vector<Vec3> c(n_cam);
  for (int k = 0; k < n_cam; ++k) c[k] = chained.at(cameras[k]);
  int s = -1;
  for (int k = 0; k < n_cam; ++k)
    if (cameras[k] != anchor && (s < 0 || c[k].norm() > c[s].norm())) s = k;
  const double scale = c[s].norm();
  require(scale > 0.0, ErrorKind::kDegenerateConfiguration, "initial centers coincide");
  for (auto& v : c) v /= scale;
  std::vector<Vec3> X(pt.size());
  for (size_t k = 0; k < pt.size(); ++k) {
    size_t pa = 0, pb = 1;
    double widest = -1.0;
    for (size_t p = 0; p < pt[k].cam.size(); ++p)
      for (size_t q = p + 1; q < pt[k].cam.size(); ++q) {
        const double d = (c[pt[k].cam[p]] - c[pt[k].cam[q]]).squaredNorm();
        if (d > widest) {
          widest = d;
          pa = p;
          pb = q;
        }
      }
    X[k] = detail::ray_midpoint(c[pt[k].cam[pa]], pt[k].b[pa], c[pt[k].cam[pb]], pt[k].b[pb]);
  }

  // Parameter layout: anchor frozen, scale camera on its tangent plane (2 dof).
  const int a_slot = slot[anchor];
  std::vector<int> offset(n_cam, -1), dim(n_cam, 0);
  int n_par = 0;
  for (int k = 0; k < n_cam; ++k) {
    if (k == a_slot) continue;
    offset[k] = n_par;
    dim[k] = k == s ? 2 : 3;
    n_par += dim[k];
  }

  auto objective = [&](const std::vector<Vec3>& cc, const std::vector<Vec3>& XX) {
    double f = 0.0;
    for (size_t k = 0; k < pt.size(); ++k)
      for (size_t o = 0; o < pt[k].cam.size(); ++o)
        f += ray_residual(pt[k].b[o], cc[pt[k].cam[o]], XX[k]).squaredNorm();
    return f;
  };

  PositioningResult res;
  res.anchor = anchor;
  res.scale_camera = cameras[s];
  double cost = objective(c, X);
  res.history.push_back(cost);
  double lambda = opt.lambda_init;
  const int chunks = std::max(1, opt.threads);

  for (int it = 0; it < opt.max_iters && cost > 1e-30; ++it) {
    const Eigen::Matrix<double, 3, 2> Bs = detail::tangent_basis(c[s]);
    auto basis = [&](int k) -> Eigen::MatrixXd {
      if (k == s) return Bs;
      return Mat3::Identity();
    };
    // Per-chunk Schur accumulation, summed in chunk order for determinism.
    std::vector<Eigen::MatrixXd> S_part(chunks, Eigen::MatrixXd::Zero(n_par, n_par));
    std::vector<Eigen::VectorXd> g_part(chunks, Eigen::VectorXd::Zero(n_par));
    std::vector<Mat3> Hkk_inv(pt.size());
    std::vector<Vec3> gk(pt.size());
    parallel_chunks(static_cast<int>(pt.size()), chunks, [&](int chunk, int begin, int end) {
      auto& S = S_part[chunk];
      auto& g = g_part[chunk];
      for (int k = begin; k < end; ++k) {
        const auto& tr = pt[k];
        Mat3 Hkk = Mat3::Zero();
        Vec3 g_k = Vec3::Zero();
        std::vector<Eigen::MatrixXd> Hck(tr.cam.size());  // dim x 3
        for (size_t o = 0; o < tr.cam.size(); ++o) {
          const int cs = tr.cam[o];
          const Mat3 P = ray_projector(tr.b[o]);
          const Vec3 r = ray_residual(tr.b[o], c[cs], X[k]);
          Hkk += P;
          g_k += r;  // P^T r = r
          if (offset[cs] < 0) continue;
          const Eigen::MatrixXd B = basis(cs);
          const Eigen::MatrixXd BtP = B.transpose() * P;
          S.block(offset[cs], offset[cs], dim[cs], dim[cs]) += BtP * B;
          g.segment(offset[cs], dim[cs]) -= B.transpose() * r;
          Hck[o] = -BtP;
        }
        Hkk.diagonal() *= 1.0 + lambda;
        const Mat3 inv = Hkk.inverse();
        Hkk_inv[k] = inv;
        gk[k] = g_k;
        for (size_t p = 0; p < tr.cam.size(); ++p) {
          const int cp = tr.cam[p];
          if (offset[cp] < 0) continue;
          const Eigen::MatrixXd HpInv = Hck[p] * inv;
          g.segment(offset[cp], dim[cp]) -= HpInv * g_k;
          for (size_t q = 0; q < tr.cam.size(); ++q) {
            const int cq = tr.cam[q];
            if (offset[cq] < 0) continue;
            S.block(offset[cp], offset[cq], dim[cp], dim[cq]) -= HpInv * Hck[q].transpose();
          }
        }
      }
    });
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n_par, n_par);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_par);
    for (int p = 0; p < chunks; ++p) {
      S += S_part[p];
      g += g_part[p];
    }
    if (it == 0) {
      // The undamped camera diagonal must carry every gauge-free direction.
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
      const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
      require(hi > 0.0 && lo > 1e-10 * hi, ErrorKind::kRankDeficient,
              "gauge-fixed positioning system is singular");
    }
    for (int k = 0; k < n_par; ++k) S(k, k) += lambda * std::max(S(k, k), 1e-12);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    const Eigen::VectorXd dc = ldlt.solve(-g);

    std::vector<Vec3> c_new = c;
    for (int k = 0; k < n_cam; ++k) {
      if (offset[k] < 0) continue;
      const Vec3 d = basis(k) * dc.segment(offset[k], dim[k]);
      c_new[k] = k == s ? Vec3((c[k] + d).normalized()) : Vec3(c[k] + d);
    }
    std::vector<Vec3> X_new = X;
    for (size_t k = 0; k < pt.size(); ++k) {
      Vec3 rhs = gk[k];
      const auto& tr = pt[k];
      for (size_t o = 0; o < tr.cam.size(); ++o) {
        const int cs = tr.cam[o];
        if (offset[cs] < 0) continue;
        const Mat3 P = ray_projector(tr.b[o]);
        rhs += -P * basis(cs) * dc.segment(offset[cs], dim[cs]);
      }
      X_new[k] = X[k] - Hkk_inv[k] * rhs;
    }
    ++res.iterations;
    const double new_cost = dc.allFinite() ? objective(c_new, X_new) : std::numeric_limits<double>::infinity();
    if (new_cost < cost) {
      const double rel = (cost - new_cost) / std::max(cost, 1e-300);
      c = std::move(c_new);
      X = std::move(X_new);
      cost = new_cost;
      res.history.push_back(cost);
      lambda = std::max(lambda * 0.5, 1e-12);
      if (rel < opt.tol) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }

  res.objective = cost;
  for (int k = 0; k < n_cam; ++k) {
    const Mat3& R = rotations.at(cameras[k]);
    res.poses[cameras[k]] = Pose{R, -R * c[k]};
  }
  for (size_t k = 0; k < kept.size(); ++k) kept[k].point = X[k];
  res.tracks = std::move(kept);
  return res;
}

}  // namespace jsfm

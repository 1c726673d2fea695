#pragma once

// Two-view layer: match ingestion, view-graph construction, fundamental and
// essential RANSAC, and Fetzer focal estimation.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "jsfm/error.hpp"
#include "jsfm/five_point.hpp"
#include "jsfm/geometry.hpp"
#include "jsfm/parallel.hpp"
#include "jsfm/rng.hpp"
#include "jsfm/robust.hpp"
#include "jsfm/types.hpp"

namespace jsfm {

struct ViewGraphEdge {
  int i = -1;  // image_a
  int j = -1;  // image_b, i < j
  PairMatches matches;
  Mat3 F = Mat3::Zero();  // xj^T F xi = 0
  Pose relative;           // R_ij, t_ij with X_j = R_ij X_i + t_ij, |t_ij| = 1
  std::vector<int> inliers;
  bool has_geometry = false;
  bool low_parallax = false;
  double median_angle_deg = 0.0;

  int inlier_count() const { return static_cast<int>(inliers.size()); }
  const Mat3& R() const { return relative.rotation; }
  const Vec3& t() const { return relative.translation; }
};

struct ViewGraph {
  std::vector<int> vertices;  // sorted image ids
  std::vector<ViewGraphEdge> edges;  // sorted by (i, j)
};

// ---------------------------------------------------------------------------
// Graph construction and connectivity

/// Groups matches by unordered pair; keeps pairs with enough matches.
inline ViewGraph build_view_graph(const std::vector<Match>& matches, int min_matches_per_pair) {
  std::map<std::pair<int, int>, PairMatches> by_pair;
  for (const auto& m0 : matches) {
    require(m0.image_a != m0.image_b, ErrorKind::kInvalidArgument, "match within a single image");
    const Match m = m0.image_a < m0.image_b ? m0 : m0.swapped();
    auto& pm = by_pair[{m.image_a, m.image_b}];
    pm.image_a = m.image_a;
    pm.image_b = m.image_b;
    pm.matches.push_back(m);
  }
  ViewGraph g;
  std::vector<int> vertices;
  for (auto& [key, pm] : by_pair) {
    if (static_cast<int>(pm.matches.size()) < min_matches_per_pair) continue;
    ViewGraphEdge e;
    e.i = key.first;
    e.j = key.second;
    e.matches = std::move(pm);
    g.edges.push_back(std::move(e));
    vertices.push_back(key.first);
    vertices.push_back(key.second);
  }
  require(!g.edges.empty(), ErrorKind::kEmptyGraph, "no image pair has enough matches");
  std::sort(vertices.begin(), vertices.end());
  vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
  g.vertices = std::move(vertices);
  return g;
}

inline ViewGraph build_view_graph(const std::vector<PairMatches>& pairs, int min_matches_per_pair) {
  std::vector<Match> all;
  for (const auto& p : pairs) all.insert(all.end(), p.matches.begin(), p.matches.end());
  return build_view_graph(all, min_matches_per_pair);
}

/// Connected components, each sorted, ordered by decreasing size then by
/// smallest vertex.
inline std::vector<std::vector<int>> connected_components(const ViewGraph& g) {
  std::map<int, int> parent;
  for (int v : g.vertices) parent[v] = v;
  std::function<int(int)> find = [&](int v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
  for (const auto& e : g.edges) {
    const int a = find(e.i), b = find(e.j);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<int, std::vector<int>> groups;
  for (int v : g.vertices) groups[find(v)].push_back(v);
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return out;
}

inline bool is_connected(const ViewGraph& g) { return connected_components(g).size() == 1; }

/// Restricts the graph to its largest connected component.
inline ViewGraph largest_component(const ViewGraph& g) {
  const auto comps = connected_components(g);
  require(!comps.empty(), ErrorKind::kEmptyGraph, "empty view graph");
  ViewGraph out;
  out.vertices = comps.front();
  for (const auto& e : g.edges) {
    if (std::binary_search(out.vertices.begin(), out.vertices.end(), e.i)) out.edges.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Epipolar geometry

/// Sampson distance (pixels) of a correspondence to xb^T F xa = 0.
inline double sampson_distance(const Mat3& F, const Vec2& a, const Vec2& b) {
  const Vec3 xa = a.homogeneous(), xb = b.homogeneous();
  const Vec3 Fa = F * xa, Ftb = F.transpose() * xb;
  const double num = xb.dot(Fa);
  const double den = Fa.x() * Fa.x() + Fa.y() * Fa.y() + Ftb.x() * Ftb.x() + Ftb.y() * Ftb.y();
  if (den <= 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(num) / std::sqrt(den);
}

inline Mat3 fundamental_from_essential(const Mat3& E, const CameraIntrinsics& Ka, const CameraIntrinsics& Kb) {
  const Mat3 F = Kb.matrix().inverse().transpose() * E * Ka.matrix().inverse();
  return F / F.norm();
}

inline Mat3 essential_from_pose(const Pose& rel) { return hat(rel.translation) * rel.rotation; }

struct RansacOptions {
  double threshold_px = 1.0;
  int max_iters = 1000;
  double confidence = 0.999;
  std::uint64_t seed = 0;
  bool use_eight_point = false;  // essential estimation fallback
  double low_parallax_deg = 1.0;
};

namespace detail {

inline int ransac_iterations_needed(double inlier_ratio, int sample_size, double confidence) {
  if (inlier_ratio <= 0.0) return std::numeric_limits<int>::max();
  const double p = std::pow(inlier_ratio, sample_size);
  if (p >= 1.0) return 1;
  const double n = std::ceil(std::log(1.0 - confidence) / std::log1p(-p));
  return n >= static_cast<double>(std::numeric_limits<int>::max()) ? std::numeric_limits<int>::max()
                                                                    : static_cast<int>(n);
}

/// Distinct indices drawn by partial Fisher-Yates.
inline std::vector<int> draw_sample(Rng& rng, int n, int k) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int s = 0; s < k; ++s) std::swap(idx[s], idx[s + static_cast<int>(rng.index(n - s))]);
  idx.resize(k);
  return idx;
}

inline std::vector<int> score_inliers(const Mat3& F, const std::vector<Match>& m, double threshold) {
  std::vector<int> in;
  for (int k = 0; k < static_cast<int>(m.size()); ++k) {
    if (sampson_distance(F, m[k].point_a, m[k].point_b) < threshold) in.push_back(k);
  }
  return in;
}

}  // namespace detail

struct FundamentalResult {
  Mat3 F;
  std::vector<int> inliers;
};

/// Normalized eight-point RANSAC scored by Sampson distance.
inline FundamentalResult estimate_fundamental_ransac(const std::vector<Match>& m, const RansacOptions& opt) {
  const int n = static_cast<int>(m.size());
  require(n >= 8, ErrorKind::kDegenerateConfiguration, "fundamental estimation needs 8 matches");
  Rng rng(opt.seed, Stream::kRansac, 0);
  FundamentalResult best;
  bool found = false;
  int needed = opt.max_iters;
  for (int it = 0; it < std::min(opt.max_iters, needed); ++it) {
    const auto sample = detail::draw_sample(rng, n, 8);
    std::vector<Vec2> pa, pb;
    for (int s : sample) {
      pa.push_back(m[s].point_a);
      pb.push_back(m[s].point_b);
    }
    const auto F = solve_eight_point(pa, pb);
    if (!F) continue;
    auto in = detail::score_inliers(*F, m, opt.threshold_px);
    if (!found || in.size() > best.inliers.size()) {
      best = {*F, std::move(in)};
      found = true;
      needed = detail::ransac_iterations_needed(static_cast<double>(best.inliers.size()) / n, 8, opt.confidence);
    }
  }
  require(found, ErrorKind::kDegenerateConfiguration, "all RANSAC samples were degenerate");
  // Least-squares refit on the consensus set; kept if it does not lose support.
  if (best.inliers.size() >= 8) {
    std::vector<Vec2> pa, pb;
    for (int k : best.inliers) {
      pa.push_back(m[k].point_a);
      pb.push_back(m[k].point_b);
    }
    if (const auto F = solve_eight_point(pa, pb)) {
      auto in = detail::score_inliers(*F, m, opt.threshold_px);
      if (in.size() >= best.inliers.size()) best = {*F, std::move(in)};
    }
  }
  return best;
}

namespace detail {

struct CheiralityVote {
  Pose pose;
  int votes = 0;
  int runner_up = 0;
  double median_angle_deg = 0.0;
};

inline CheiralityVote cheirality_vote(const Mat3& E, const std::vector<Vec3>& ra, const std::vector<Vec3>& rb,
                                      const std::vector<int>& subset) {
  const auto candidates = decompose_essential(E);
  std::array<int, 4> votes{};
  for (int c = 0; c < 4; ++c) {
    for (int k : subset) {
      const auto tp = triangulate_midpoint(candidates[c], ra[k], rb[k]);
      if (tp.depth_a > 0.0 && tp.depth_b > 0.0) ++votes[c];
    }
  }
  const int best = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  CheiralityVote out;
  out.pose = candidates[best];
  out.votes = votes[best];
  for (int c = 0; c < 4; ++c)
    if (c != best) out.runner_up = std::max(out.runner_up, votes[c]);
  std::vector<double> angles;
  for (int k : subset) angles.push_back(triangulate_midpoint(out.pose, ra[k], rb[k]).angle);
  if (!angles.empty()) {
    std::nth_element(angles.begin(), angles.begin() + angles.size() / 2, angles.end());
    out.median_angle_deg = rad2deg(angles[angles.size() / 2]);
  }
  return out;
}

/// Rotation-only RANSAC (two-ray Kabsch samples) for pairs without
/// translation, where every essential matrix [t]x R fits the data.
inline std::optional<std::pair<Mat3, std::vector<int>>> fit_pure_rotation(const std::vector<Vec3>& ra,
                                                                          const std::vector<Vec3>& rb,
                                                                          double max_angle, Rng& rng, int iters) {
  const int n = static_cast<int>(ra.size());
  if (n < 2) return std::nullopt;
  auto kabsch = [&](const std::vector<int>& idx) {
    Mat3 H = Mat3::Zero();
    for (int k : idx) H += rb[k].normalized() * ra[k].normalized().transpose();
    return nearest_rotation(H);
  };
  auto consensus = [&](const Mat3& R) {
    std::vector<int> in;
    for (int k = 0; k < n; ++k) {
      const double c = (R * ra[k].normalized()).dot(rb[k].normalized());
      if (std::acos(std::clamp(c, -1.0, 1.0)) < max_angle) in.push_back(k);
    }
    return in;
  };
  std::vector<int> best;
  Mat3 bestR = Mat3::Identity();
  for (int it = 0; it < iters; ++it) {
    auto in = consensus(kabsch(draw_sample(rng, n, 2)));
    if (in.size() > best.size()) {
      best = std::move(in);
      bestR = kabsch(best);
    }
  }
  if (best.size() < 2) return std::nullopt;
  return std::make_pair(bestR, consensus(bestR));
}

}  // namespace detail

/// Relative pose of one image pair: five-point RANSAC (eight-point behind a
/// flag), cheirality vote over the four factorizations, unit translation.
inline ViewGraphEdge estimate_relative_pose(const PairMatches& pair, const CameraIntrinsics& Ka,
                                            const CameraIntrinsics& Kb, const RansacOptions& opt) {
  const auto& m = pair.matches;
  const int n = static_cast<int>(m.size());
  const int sample_size = opt.use_eight_point ? 8 : 5;
  require(n >= sample_size, ErrorKind::kDegenerateConfiguration, "too few matches for relative pose");
  require(Ka.valid() && Kb.valid(), ErrorKind::kInvalidArgument, "invalid intrinsics");
  std::vector<Vec3> ra(n), rb(n);
  for (int k = 0; k < n; ++k) {
    ra[k] = Ka.unproject(m[k].point_a);
    rb[k] = Kb.unproject(m[k].point_b);
  }
  Rng rng(opt.seed, Stream::kRansac, 1);
  Mat3 bestE = Mat3::Zero();
  std::vector<int> best_in;
  bool found = false;
  int needed = opt.max_iters;
  for (int it = 0; it < std::min(opt.max_iters, needed); ++it) {
    const auto sample = detail::draw_sample(rng, n, sample_size);
    std::vector<Mat3> models;
    if (opt.use_eight_point) {
      std::vector<Vec2> pa, pb;
      for (int s : sample) {
        pa.push_back(ra[s].hnormalized());
        pb.push_back(rb[s].hnormalized());
      }
      if (const auto G = solve_eight_point(pa, pb)) models.push_back(nearest_essential(*G));
    } else {
      std::array<Vec3, 5> a, b;
      for (int s = 0; s < 5; ++s) {
        a[s] = ra[sample[s]];
        b[s] = rb[sample[s]];
      }
      models = solve_essential_five_point(a, b);
    }
    for (const auto& E : models) {
      auto in = detail::score_inliers(fundamental_from_essential(E, Ka, Kb), m, opt.threshold_px);
      if (!found || in.size() > best_in.size()) {
        bestE = E;
        best_in = std::move(in);
        found = true;
        needed = detail::ransac_iterations_needed(static_cast<double>(best_in.size()) / n, sample_size,
                                                  opt.confidence);
      }
    }
  }
  if (!found || static_cast<int>(best_in.size()) < sample_size) {
    // Exactly rotational pairs make the minimal problem singular. Such an
    // edge still constrains rotation, so it is returned flagged low-parallax
    // with an arbitrary unit translation.
    const double max_angle = opt.threshold_px / std::max(Ka.focal_x, Kb.focal_x);
    const auto rot = detail::fit_pure_rotation(ra, rb, max_angle, rng, 200);
    require(rot && 2 * static_cast<int>(rot->second.size()) >= n, ErrorKind::kDegenerateConfiguration,
            "no essential matrix found");
    ViewGraphEdge e;
    e.i = pair.image_a;
    e.j = pair.image_b;
    e.matches = pair;
    e.relative = {rot->first, Vec3::UnitZ()};
    e.F = fundamental_from_essential(essential_from_pose(e.relative), Ka, Kb);
    e.inliers = rot->second;
    e.has_geometry = true;
    e.low_parallax = true;
    return e;
  }
  const auto vote = detail::cheirality_vote(bestE, ra, rb, best_in);
  require(vote.votes - vote.runner_up >= 2, ErrorKind::kCheiralityAmbiguous,
          "cheirality vote undecided for pair (" + std::to_string(pair.image_a) + ", " +
              std::to_string(pair.image_b) + ")");

  ViewGraphEdge e;
  e.i = pair.image_a;
  e.j = pair.image_b;
  e.matches = pair;
  e.relative = {nearest_rotation(vote.pose.rotation), vote.pose.translation.normalized()};
  e.F = fundamental_from_essential(essential_from_pose(e.relative), Ka, Kb);
  e.inliers = std::move(best_in);
  e.has_geometry = true;
  e.median_angle_deg = vote.median_angle_deg;
  e.low_parallax = vote.median_angle_deg < opt.low_parallax_deg;
  return e;
}

struct ViewGraphStats {
  int input_edges = 0;
  int failed_edges = 0;
  int weak_edges = 0;
  int low_parallax_edges = 0;
};

/// Estimates geometry for every edge, drops failures and edges below the
/// inlier minimum, and keeps the largest connected component. Edges are
/// independent; results are merged in pair order.
inline ViewGraph estimate_view_graph_geometry(const ViewGraph& g, const std::map<int, CameraIntrinsics>& intrinsics,
                                              const RansacOptions& opt, int min_inliers,
                                              ViewGraphStats* stats = nullptr, int threads = 0) {
  const int n = static_cast<int>(g.edges.size());
  std::vector<std::optional<ViewGraphEdge>> results(n);
  const int chunks = threads > 0 ? threads : num_threads();
  parallel_chunks(n, chunks, [&](int, int begin, int end) {
    for (int k = begin; k < end; ++k) {
      const auto& e = g.edges[k];
      RansacOptions o = opt;
      o.seed = splitmix64(opt.seed ^ (static_cast<std::uint64_t>(e.i) << 32 | static_cast<std::uint32_t>(e.j)));
      try {
        results[k] = estimate_relative_pose(e.matches, intrinsics.at(e.i), intrinsics.at(e.j), o);
      } catch (const Error&) {
        results[k].reset();
      }
    }
  });
  ViewGraph out;
  ViewGraphStats st;
  st.input_edges = n;
  std::vector<int> vertices;
  for (int k = 0; k < n; ++k) {
    if (!results[k]) {
      ++st.failed_edges;
      continue;
    }
    if (results[k]->inlier_count() < min_inliers) {
      ++st.weak_edges;
      continue;
    }
    if (results[k]->low_parallax) ++st.low_parallax_edges;
    vertices.push_back(results[k]->i);
    vertices.push_back(results[k]->j);
    out.edges.push_back(std::move(*results[k]));
  }
  require(!out.edges.empty(), ErrorKind::kEmptyGraph, "no edge survived two-view estimation");
  std::sort(vertices.begin(), vertices.end());
  vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
  out.vertices = std::move(vertices);
  if (stats) *stats = st;
  return largest_component(out);
}

// ---------------------------------------------------------------------------
// Focal estimation (Fetzer)

struct FundamentalEdge {
  int i = -1;
  int j = -1;
  Mat3 F;  // xj^T F xi = 0
};

struct FetzerOptions {
  bool shared_intrinsics = true;
  bool calibrated = false;  // skip estimation, return the initial focals
  double cauchy_scale = 0.1;
  int max_iters = 100;
  double tolerance = 1e-12;
};

namespace detail {

/// Scale-free deviation of E = Kj^T F Ki from the essential manifold. E is
/// rescaled so ||E||_F^2 = 2; then ||E E^T||_F^2 = 2 exactly when the two
/// nonzero singular values agree. Equals 2 (s1^2 - s2^2)^2 / (s1^2 + s2^2)^2.
inline double fetzer_residual(const Mat3& F, double fi, const Vec2& ppi, double fj, const Vec2& ppj) {
  Mat3 Ki, Kj;
  Ki << fi, 0, ppi.x(), 0, fi, ppi.y(), 0, 0, 1;
  Kj << fj, 0, ppj.x(), 0, fj, ppj.y(), 0, 0, 1;
  Mat3 E = Kj.transpose() * F * Ki;
  E *= std::sqrt(2.0) / E.norm();
  return (E * E.transpose()).squaredNorm() - 2.0;
}

}  // namespace detail

/// Robust objective summed over edges for the given per-camera focals.
inline double fetzer_objective(const std::vector<FundamentalEdge>& edges, const std::vector<CameraIntrinsics>& K,
                               const std::vector<double>& focals, double cauchy_scale = 0.1) {
  const auto kernel = RobustKernel::cauchy(cauchy_scale);
  double total = 0.0;
  for (const auto& e : edges) {
    const double r = detail::fetzer_residual(e.F, focals[e.i], K[e.i].principal_point, focals[e.j],
                                             K[e.j].principal_point);
    total += kernel.value(r * r);
  }
  return total;
}

/// Minimizes the robust Fetzer objective over log-focals by damped
/// Gauss-Newton with IRLS weights (numeric Jacobian of each scalar residual).
/// Principal points stay at their initial values. Results are clamped to
/// [0.1, 10] x initial.
inline std::vector<double> estimate_focal_fetzer(const std::vector<FundamentalEdge>& edges,
                                                 const std::vector<CameraIntrinsics>& initial,
                                                 const FetzerOptions& opt = {}) {
  const int n_cams = static_cast<int>(initial.size());
  std::vector<double> init_f(n_cams);
  for (int c = 0; c < n_cams; ++c) init_f[c] = initial[c].focal_x;
  if (opt.calibrated) return init_f;
  require(!edges.empty(), ErrorKind::kInvalidArgument, "focal estimation needs at least one edge");

  // Parameter layout: one shared log-focal, or one per camera.
  const int n_par = opt.shared_intrinsics ? 1 : n_cams;
  Eigen::VectorXd p(n_par);
  if (opt.shared_intrinsics) {
    p[0] = std::log(init_f[0]);
  } else {
    for (int c = 0; c < n_cams; ++c) p[c] = std::log(init_f[c]);
  }
  Eigen::VectorXd lo(n_par), hi(n_par);
  for (int k = 0; k < n_par; ++k) {
    lo[k] = std::log(0.1 * init_f[opt.shared_intrinsics ? 0 : k]);
    hi[k] = std::log(10.0 * init_f[opt.shared_intrinsics ? 0 : k]);
  }
  auto focals_of = [&](const Eigen::VectorXd& q) {
    std::vector<double> f(n_cams);
    for (int c = 0; c < n_cams; ++c) f[c] = std::exp(q[opt.shared_intrinsics ? 0 : c]);
    return f;
  };
  auto objective = [&](const Eigen::VectorXd& q) { return fetzer_objective(edges, initial, focals_of(q), opt.cauchy_scale); };
  const auto kernel = RobustKernel::cauchy(opt.cauchy_scale);

  double lambda = 1e-4;
  double cost = objective(p);
  bool converged = false;
  for (int it = 0; it < opt.max_iters && !converged; ++it) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n_par, n_par);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_par);
    const auto f = focals_of(p);
    for (const auto& e : edges) {
      const auto& ppi = initial[e.i].principal_point;
      const auto& ppj = initial[e.j].principal_point;
      const double r = detail::fetzer_residual(e.F, f[e.i], ppi, f[e.j], ppj);
      const double w = kernel.weight(r * r);
      Eigen::VectorXd J = Eigen::VectorXd::Zero(n_par);
      const double h = 1e-6;
      const int ki = opt.shared_intrinsics ? 0 : e.i, kj = opt.shared_intrinsics ? 0 : e.j;
      std::vector<int> ks = {ki};
      if (kj != ki) ks.push_back(kj);
      for (int k : ks) {
        Eigen::VectorXd qp = p, qm = p;
        qp[k] += h;
        qm[k] -= h;
        const auto fp = focals_of(qp), fm = focals_of(qm);
        J[k] = (detail::fetzer_residual(e.F, fp[e.i], ppi, fp[e.j], ppj) -
                detail::fetzer_residual(e.F, fm[e.i], ppi, fm[e.j], ppj)) /
               (2 * h);
      }
      H += w * J * J.transpose();
      g += w * J * r;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 20 && !accepted; ++attempt) {
      Eigen::MatrixXd A = H;
      A.diagonal() += lambda * (H.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd step = -A.ldlt().solve(g);
      const Eigen::VectorXd q = p + step;
      Eigen::VectorXd qc = q.cwiseMax(lo).cwiseMin(hi);
      const double c = objective(qc);
      if (c <= cost) {
        const double change = cost - c;
        converged = step.norm() < 1e-10 || change <= opt.tolerance * std::max(cost, 1e-300);
        p = qc;
        cost = c;
        lambda = std::max(lambda * 0.5, 1e-12);
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) converged = true;  // no descent direction left: stationary
  }
  require(converged, ErrorKind::kNoConvergence, "focal estimation did not converge");
  return focals_of(p);
}

// ---------------------------------------------------------------------------
// Match file I/O
//
// One match per line: image_a image_b xa ya xb yb [keypoint_a keypoint_b].
// Lines starting with '#' are comments.

inline void write_matches(const std::vector<Match>& matches, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path);
  out << "# image_a image_b xa ya xb yb keypoint_a keypoint_b\n";
  char buf[256];
  for (const auto& m : matches) {
    std::snprintf(buf, sizeof(buf), "%d %d %.17g %.17g %.17g %.17g %d %d\n", m.image_a, m.image_b, m.point_a.x(),
                  m.point_a.y(), m.point_b.x(), m.point_b.y(), m.keypoint_a, m.keypoint_b);
    out << buf;
  }
}

inline std::vector<Match> read_matches(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read " + path);
  std::vector<Match> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    Match m;
    if (!(ss >> m.image_a >> m.image_b >> m.point_a.x() >> m.point_a.y() >> m.point_b.x() >> m.point_b.y()))
      throw Error(ErrorKind::kParse, path + ":" + std::to_string(line_no) + ": malformed match");
    if (!(ss >> m.keypoint_a >> m.keypoint_b)) m.keypoint_a = m.keypoint_b = -1;
    out.push_back(m);
  }
  return out;
}

}  // namespace jsfm

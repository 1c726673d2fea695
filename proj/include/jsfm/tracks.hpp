#pragma once

// Multi-view tracks from pairwise inlier matches (union-find), plus a
// reprojection-proximity merge.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "jsfm/geometry.hpp"
#include "jsfm/types.hpp"
#include "jsfm/viewgraph.hpp"

namespace jsfm {

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  int find(int v) {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }

  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<int> parent_;
  std::vector<int> rank_;
};

/// Links (image, keypoint) nodes through matches. Within a component, an
/// image observed through several keypoints keeps only the keypoint with the
/// largest total incident match weight (ties: lower keypoint id). Tracks with
/// fewer than two observations are dropped. Tracks are ordered by their
/// smallest (image, keypoint) node and numbered from 0.
inline std::vector<Track> build_tracks(const std::vector<Match>& matches, const std::vector<double>& weights = {}) {
  require(weights.empty() || weights.size() == matches.size(), ErrorKind::kInvalidArgument,
          "one weight per match expected");
  std::map<std::pair<int, int>, int> node_of;
  std::vector<std::pair<int, int>> nodes;
  std::vector<Vec2> pixel;
  std::vector<double> node_weight;
  auto node = [&](int image, int keypoint, const Vec2& px) {
    auto [it, inserted] = node_of.try_emplace({image, keypoint}, static_cast<int>(nodes.size()));
    if (inserted) {
      nodes.emplace_back(image, keypoint);
      pixel.push_back(px);
      node_weight.push_back(0.0);
    }
    return it->second;
  };
  std::vector<std::pair<int, int>> links;
  for (size_t k = 0; k < matches.size(); ++k) {
    const auto& m = matches[k];
    require(m.keypoint_a >= 0 && m.keypoint_b >= 0, ErrorKind::kInvalidArgument,
            "track building needs keypoint ids");
    const int a = node(m.image_a, m.keypoint_a, m.point_a);
    const int b = node(m.image_b, m.keypoint_b, m.point_b);
    const double w = weights.empty() ? 1.0 : weights[k];
    node_weight[a] += w;
    node_weight[b] += w;
    links.emplace_back(a, b);
  }
  // node_of is ordered by (image, keypoint); renumber so node order follows it.
  UnionFind uf(static_cast<int>(nodes.size()));
  for (auto [a, b] : links) uf.unite(a, b);

  std::map<int, std::vector<int>> components;  // root -> nodes in (image, keypoint) order
  for (const auto& [key, n] : node_of) components[uf.find(n)].push_back(n);

  std::vector<std::vector<int>> kept;
  for (auto& [root, members] : components) {
    std::map<int, int> best_per_image;
    for (int n : members) {
      const int image = nodes[n].first;
      auto it = best_per_image.find(image);
      if (it == best_per_image.end()) {
        best_per_image[image] = n;
        continue;
      }
      const int cur = it->second;
      // members arrive in keypoint order, so a strict > keeps the lower id on ties.
      if (node_weight[n] > node_weight[cur]) it->second = n;
    }
    if (best_per_image.size() < 2) continue;
    std::vector<int> t;
    for (const auto& [image, n] : best_per_image) t.push_back(n);
    kept.push_back(std::move(t));
  }
  std::sort(kept.begin(), kept.end(), [&](const auto& a, const auto& b) { return nodes[a[0]] < nodes[b[0]]; });

  std::vector<Track> out;
  for (const auto& t : kept) {
    Track track;
    track.id = static_cast<int>(out.size());
    for (int n : t) track.observations.push_back({nodes[n].first, pixel[n], nodes[n].second});
    out.push_back(std::move(track));
  }
  return out;
}

/// Tracks from the inlier matches of every edge; a match is weighted by its
/// edge's inlier count.
inline std::vector<Track> build_tracks(const ViewGraph& g) {
  std::vector<Match> matches;
  std::vector<double> weights;
  for (const auto& e : g.edges) {
    for (int k : e.inliers) {
      matches.push_back(e.matches.matches[k]);
      weights.push_back(static_cast<double>(e.inlier_count()));
    }
  }
  return build_tracks(matches, weights);
}

struct MergeOptions {
  double merge_px = 2.0;
  double merge_distance = 0.01;  // world units (1% of a unit-extent scene)
};

namespace detail {

inline bool reprojects_onto(const Track& src, const Track& dst, const std::vector<Pose>& poses,
                            const std::vector<CameraIntrinsics>& K, double px) {
  for (const auto& o : dst.observations) {
    const auto p = try_project(K[o.image], poses[o.image], *src.point);
    if (!p || (*p - o.pixel).norm() > px) return false;
  }
  return true;
}

inline Track merge_pair(const Track& a, const Track& b) {
  Track m = a;
  for (const auto& o : b.observations) {
    if (!m.find(o.image)) m.observations.push_back(o);
  }
  std::sort(m.observations.begin(), m.observations.end(),
            [](const Observation& x, const Observation& y) { return x.image < y.image; });
  const double na = static_cast<double>(a.observations.size()), nb = static_cast<double>(b.observations.size());
  m.point = (na * *a.point + nb * *b.point) / (na + nb);
  m.color = (na * a.color + nb * b.color) / (na + nb);
  return m;
}

}  // namespace detail

/// Merges pairs of triangulated tracks whose points are closer than
/// merge_distance and whose points each reproject within merge_px of the
/// other track's observations. Repeats until nothing changes, so the result
/// is a fixed point (merging it again is a no-op). Untriangulated tracks pass
/// through unchanged. Where both tracks observe an image, the lower-id
/// track's observation is kept.
inline std::vector<Track> merge_tracks(std::vector<Track> tracks, const std::vector<Pose>& poses,
                                       const std::vector<CameraIntrinsics>& K, const MergeOptions& opt = {}) {
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> order;
    for (int k = 0; k < static_cast<int>(tracks.size()); ++k)
      if (tracks[k].point) order.push_back(k);
    // Sweep along x so only nearby candidates are compared.
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double xa = tracks[a].point->x(), xb = tracks[b].point->x();
      return xa < xb || (xa == xb && a < b);
    });
    std::vector<bool> consumed(tracks.size(), false);
    std::vector<std::pair<int, int>> merges;
    for (size_t p = 0; p < order.size(); ++p) {
      const int a = order[p];
      if (consumed[a]) continue;
      for (size_t q = p + 1; q < order.size(); ++q) {
        const int b = order[q];
        if (tracks[b].point->x() - tracks[a].point->x() > opt.merge_distance) break;
        if (consumed[b]) continue;
        if ((*tracks[a].point - *tracks[b].point).norm() >= opt.merge_distance) continue;
        if (!detail::reprojects_onto(tracks[a], tracks[b], poses, K, opt.merge_px) ||
            !detail::reprojects_onto(tracks[b], tracks[a], poses, K, opt.merge_px))
          continue;
        merges.emplace_back(std::min(a, b), std::max(a, b));
        consumed[a] = consumed[b] = true;
        break;
      }
    }
    if (merges.empty()) break;
    changed = true;
    std::vector<bool> drop(tracks.size(), false);
    for (auto [lo, hi] : merges) {
      tracks[lo] = detail::merge_pair(tracks[lo], tracks[hi]);
      drop[hi] = true;
    }
    std::vector<Track> next;
    for (size_t k = 0; k < tracks.size(); ++k)
      if (!drop[k]) next.push_back(std::move(tracks[k]));
    tracks = std::move(next);
  }
  return tracks;
}

}  // namespace jsfm

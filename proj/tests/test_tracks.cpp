#include <gtest/gtest.h>

#include <queue>
#include <set>

#include "jsfm/rng.hpp"
#include "jsfm/scene.hpp"
#include "jsfm/tracks.hpp"

using namespace jsfm;

namespace {

using Node = std::pair<int, int>;

Match link(int ia, int ka, int ib, int kb) { return {ia, ib, Vec2(ka, 0), Vec2(kb, 0), ka, kb}; }

std::set<Node> nodes_of(const Track& t) {
  std::set<Node> s;
  for (const auto& o : t.observations) s.insert({o.image, o.keypoint});
  return s;
}

TEST(Tracks, ChainIsTransitive) {
  const auto tracks = build_tracks({link(0, 5, 1, 7), link(1, 7, 2, 2), link(3, 1, 4, 1)});
  ASSERT_EQ(tracks.size(), 2u);
  EXPECT_EQ(nodes_of(tracks[0]), (std::set<Node>{{0, 5}, {1, 7}, {2, 2}}));
  EXPECT_EQ(nodes_of(tracks[1]), (std::set<Node>{{3, 1}, {4, 1}}));
  EXPECT_EQ(tracks[0].id, 0);
  EXPECT_EQ(tracks[1].id, 1);
  EXPECT_EQ(tracks[0].observations[1].pixel, Vec2(7, 0));
}

TEST(Tracks, DuplicateKeepsHeavierKeypoint) {
  // Image 1 is reached through keypoints 1 and 2; keypoint 2 has more support.
  const std::vector<Match> m = {link(0, 1, 1, 1), link(0, 1, 1, 2), link(1, 2, 2, 1)};
  const auto tracks = build_tracks(m);
  ASSERT_EQ(tracks.size(), 1u);
  EXPECT_EQ(nodes_of(tracks[0]), (std::set<Node>{{0, 1}, {1, 2}, {2, 1}}));
  // Reweighting flips the choice.
  const auto heavy = build_tracks(m, {10.0, 1.0, 1.0});
  EXPECT_EQ(nodes_of(heavy[0]), (std::set<Node>{{0, 1}, {1, 1}, {2, 1}}));
}

TEST(Tracks, DuplicateTieKeepsLowerKeypoint) {
  const auto tracks = build_tracks({link(0, 3, 1, 9), link(0, 3, 1, 4)});
  ASSERT_EQ(tracks.size(), 1u);
  EXPECT_EQ(nodes_of(tracks[0]), (std::set<Node>{{0, 3}, {1, 4}}));
}

TEST(Tracks, SingletonAfterSplitIsDropped) {
  // Both observations are in image 0, so nothing survives.
  EXPECT_TRUE(build_tracks({link(0, 1, 0, 2)}).empty());
}

TEST(Tracks, RequiresKeypointIds) {
  Match m = link(0, 1, 1, 1);
  m.keypoint_a = -1;
  EXPECT_THROW(build_tracks({m}), Error);
}

TEST(Tracks, NoiseFreeMatchesReproduceGroundTruth) {
  const auto scene = generate_scene(8, 150, Layout::kOrbit, 3);
  const auto cm = corrupt_observations(scene, {});
  std::vector<Match> all;
  for (const auto& p : cm.pairs) all.insert(all.end(), p.matches.begin(), p.matches.end());
  const auto tracks = build_tracks(all);
  std::set<std::set<Node>> got, want;
  for (const auto& t : tracks) got.insert(nodes_of(t));
  for (const auto& t : scene.tracks)
    if (t.observations.size() >= 2) want.insert(nodes_of(t));
  EXPECT_EQ(got, want);
  // Pixels come straight from the matches.
  for (const auto& t : tracks)
    for (const auto& o : t.observations) EXPECT_EQ(o.pixel, cm.observed.at({o.image, o.keypoint}));
}

TEST(Tracks, MatchesBruteForceComponents) {
  Rng rng(21, Stream::kTest, 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Match> m;
    for (int k = 0; k < 60; ++k) {
      const int ia = static_cast<int>(rng.index(6)), ib = static_cast<int>(rng.index(6));
      if (ia == ib) continue;
      m.push_back(link(ia, static_cast<int>(rng.index(8)), ib, static_cast<int>(rng.index(8))));
    }
    // Reference components by BFS over an explicit adjacency list.
    std::map<Node, std::vector<Node>> adj;
    for (const auto& x : m) {
      adj[{x.image_a, x.keypoint_a}].push_back({x.image_b, x.keypoint_b});
      adj[{x.image_b, x.keypoint_b}].push_back({x.image_a, x.keypoint_a});
    }
    std::map<Node, int> comp;
    int n_comp = 0;
    for (const auto& [start, _] : adj) {
      if (comp.count(start)) continue;
      std::queue<Node> q;
      q.push(start);
      comp[start] = n_comp;
      while (!q.empty()) {
        const Node v = q.front();
        q.pop();
        for (const auto& w : adj[v])
          if (!comp.count(w)) {
            comp[w] = n_comp;
            q.push(w);
          }
      }
      ++n_comp;
    }
    std::vector<std::set<int>> images_of(n_comp);
    for (const auto& [v, c] : comp) images_of[c].insert(v.first);

    const auto tracks = build_tracks(m);
    std::set<int> seen;
    for (const auto& t : tracks) {
      const int c = comp.at({t.observations[0].image, t.observations[0].keypoint});
      EXPECT_TRUE(seen.insert(c).second) << "component split into two tracks";
      std::set<int> imgs;
      for (const auto& o : t.observations) {
        EXPECT_EQ(comp.at({o.image, o.keypoint}), c);
        EXPECT_TRUE(imgs.insert(o.image).second) << "two observations in one image";
      }
      EXPECT_EQ(imgs, images_of[c]);
    }
    for (int c = 0; c < n_comp; ++c)
      if (images_of[c].size() >= 2) EXPECT_TRUE(seen.count(c)) << "component lost";
  }
}

struct MergeFixture {
  Scene scene = generate_scene(8, 120, Layout::kOrbit, 5);
  std::vector<Track> tracks;

  MergeFixture() {
    for (size_t k = 0; k < scene.tracks.size(); ++k) {
      Track t = scene.tracks[k];
      t.point = scene.points[k].position;
      tracks.push_back(t);
    }
  }
};

TEST(TrackMerge, SplitTrackIsMergedBack) {
  MergeFixture f;
  // Split every GT track with >= 4 observations into two halves whose points
  // differ by a tiny offset.
  std::vector<Track> split;
  int n_split = 0;
  for (const auto& t : f.tracks) {
    if (t.observations.size() < 4) {
      split.push_back(t);
      continue;
    }
    Track a = t, b = t;
    const size_t h = t.observations.size() / 2;
    a.observations.assign(t.observations.begin(), t.observations.begin() + h);
    b.observations.assign(t.observations.begin() + h, t.observations.end());
    *b.point += Vec3(1e-4, 0, 0);
    split.push_back(a);
    split.push_back(b);
    ++n_split;
  }
  ASSERT_GT(n_split, 10);
  const auto merged = merge_tracks(split, f.scene.poses(), f.scene.intrinsics());
  ASSERT_EQ(merged.size(), f.tracks.size());
  std::set<std::set<Node>> got, want;
  for (const auto& t : merged) got.insert(nodes_of(t));
  for (const auto& t : f.tracks) want.insert(nodes_of(t));
  EXPECT_EQ(got, want);
}

TEST(TrackMerge, IdempotentAndLeavesDistinctTracks) {
  MergeFixture f;
  const auto once = merge_tracks(f.tracks, f.scene.poses(), f.scene.intrinsics());
  EXPECT_EQ(once.size(), f.tracks.size());  // GT points are far apart
  auto twice = merge_tracks(once, f.scene.poses(), f.scene.intrinsics());
  ASSERT_EQ(twice.size(), once.size());
  for (size_t k = 0; k < once.size(); ++k) {
    EXPECT_EQ(nodes_of(twice[k]), nodes_of(once[k]));
    EXPECT_EQ(*twice[k].point, *once[k].point);
  }
}

TEST(TrackMerge, ReprojectionGateBlocksNearbyButInconsistentTracks) {
  MergeFixture f;
  auto tracks = f.tracks;
  Track ghost = tracks[0];
  *ghost.point += Vec3(1e-4, 0, 0);
  for (auto& o : ghost.observations) o.pixel += Vec2(10, 0);  // observations disagree by 10 px
  tracks.push_back(ghost);
  EXPECT_EQ(merge_tracks(tracks, f.scene.poses(), f.scene.intrinsics()).size(), tracks.size());
}

}  // namespace

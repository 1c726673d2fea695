#pragma once

#include <optional>
#include <vector>

#include "jsfm/geometry.hpp"

namespace jsfm {

/// One 2D measurement of a track in an image.
struct Observation {
  int image = -1;
  Vec2 pixel = Vec2::Zero();
  int keypoint = -1;
};

/// A 3D point and the set of 2D observations that see it. At most one
/// observation per image.
struct Track {
  int id = -1;
  std::optional<Vec3> point;
  Vec3 color = Vec3::Constant(0.5);
  std::vector<Observation> observations;

  const Observation* find(int image) const {
    for (const auto& o : observations) {
      if (o.image == image) return &o;
    }
    return nullptr;
  }
};

/// A putative correspondence between two images. Keypoint ids are optional
/// (-1) but required to link matches into tracks.
struct Match {
  int image_a = -1;
  int image_b = -1;
  Vec2 point_a = Vec2::Zero();
  Vec2 point_b = Vec2::Zero();
  int keypoint_a = -1;
  int keypoint_b = -1;

  Match swapped() const { return {image_b, image_a, point_b, point_a, keypoint_b, keypoint_a}; }
};

/// All matches of one unordered image pair, stored with image_a < image_b.
struct PairMatches {
  int image_a = -1;
  int image_b = -1;
  std::vector<Match> matches;
  /// Ground-truth outlier labels when produced synthetically; empty otherwise.
  std::vector<bool> is_outlier;
};

}  // namespace jsfm

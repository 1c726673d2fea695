#pragma once

// Builders that turn a synthetic scene into solver inputs.

#include "jsfm/bundle_adjustment.hpp"
#include "jsfm/rng.hpp"
#include "jsfm/scene.hpp"

namespace jsfm::oracle {

/// Ground-truth reconstruction: GT poses, intrinsics and points; track ids
/// equal point ids.
inline Reconstruction reconstruction_from_scene(const Scene& s) {
  Reconstruction r;
  for (int i = 0; i < static_cast<int>(s.cameras.size()); ++i) {
    r.poses[i] = s.cameras[i].pose;
    r.intrinsics[i] = s.cameras[i].intrinsics;
  }
  for (size_t k = 0; k < s.tracks.size(); ++k) {
    if (s.tracks[k].observations.size() < 2) continue;
    Track t = s.tracks[k];
    t.point = s.points[k].position;
    t.color = s.points[k].color;
    r.tracks.push_back(t);
  }
  return r;
}

inline std::vector<Pose> pose_list(const Reconstruction& r) {
  std::vector<Pose> out;
  for (const auto& [i, T] : r.poses) out.push_back(T);
  return out;
}

/// Small hand-built instance: cameras on a 60 degree cap at distance 4
/// looking at the origin, every point seen by every camera, observations
/// perturbed so residuals are non-zero.
inline Reconstruction small_instance(int n_cams, int n_pts, Rng& rng) {
  Reconstruction r;
  for (int i = 0; i < n_cams; ++i) {
    Vec3 dir;
    do dir = rng.unit_vector();
    while (dir.z() > -0.5);
    const Vec3 c = 4.0 * dir;
    const Vec3 z = -c.normalized();
    const Vec3 x = z.cross(Vec3::UnitY()).normalized();
    Mat3 R;
    R.row(0) = x;
    R.row(1) = z.cross(x);
    R.row(2) = z;
    r.poses[i] = Pose::from_center(R, c);
    r.intrinsics[i] = CameraIntrinsics::centered(rng.uniform(300, 500), 256, 256);
  }
  for (int k = 0; k < n_pts; ++k) {
    Track t;
    t.id = k;
    const Vec3 X = 0.8 * rng.uniform() * rng.unit_vector();
    for (int i = 0; i < n_cams; ++i)
      t.observations.push_back({i, project(r.intrinsics[i], r.poses[i], X) + 3.0 * Vec2(rng.normal(), rng.normal()), k});
    t.point = X + 0.02 * rng.unit_vector();
    r.tracks.push_back(t);
  }
  return r;
}

}  // namespace jsfm::oracle

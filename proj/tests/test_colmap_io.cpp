#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "jsfm/colmap_io.hpp"
#include "jsfm/rng.hpp"
#include "jsfm/scene.hpp"
#include "support/fixtures.hpp"

using namespace jsfm;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  const auto d = fs::path(::testing::TempDir()) / name;
  fs::remove_all(d);
  return d.string();
}

std::vector<std::string> records(const std::string& path) {
  std::ifstream f(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line))
    if (line.empty() || line[0] != '#') out.push_back(line);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Reconstruction one_camera_one_point() {
  Reconstruction r;
  r.intrinsics[0] = {412.25, 413.5, Vec2(255.5, 250.25), 512, 512};
  r.poses[0] = Pose{so3_exp(Vec3(0.1, -0.2, 0.3)), Vec3(0.5, -1.0 / 3.0, 2.0)};
  Track t;
  t.id = 0;
  t.point = Vec3(0.1, 0.2, 3.0);
  t.color = Vec3(1.0, 0.5, 0.0);
  t.observations.push_back({0, Vec2(300.125, 200.75), 0});
  r.tracks.push_back(t);
  return r;
}

TEST(ColmapExport, OneCameraOnePointRoundTrip) {
  const auto dir = fresh_dir("colmap_one");
  const auto r = one_camera_one_point();
  export_colmap_text(r, dir);
  EXPECT_EQ(records(dir + "/cameras.txt").size(), 1u);
  EXPECT_EQ(records(dir + "/images.txt").size(), 2u);  // pose line + observation line
  EXPECT_EQ(records(dir + "/points3D.txt").size(), 1u);
  const auto back = read_colmap_text(dir);
  ASSERT_EQ(back.poses.size(), 1u);
  EXPECT_LT((back.poses.at(0).rotation - r.poses.at(0).rotation).norm(), 1e-9);
  EXPECT_LT((back.poses.at(0).translation - r.poses.at(0).translation).norm(), 1e-9);
  EXPECT_NEAR(back.intrinsics.at(0).focal_x, 412.25, 1e-9);
  EXPECT_NEAR(back.intrinsics.at(0).focal_y, 413.5, 1e-9);
  EXPECT_EQ(back.intrinsics.at(0).width, 512);
  ASSERT_EQ(back.tracks.size(), 1u);
  EXPECT_LT((*back.tracks[0].point - *r.tracks[0].point).norm(), 1e-9);
  ASSERT_EQ(back.tracks[0].observations.size(), 1u);
  EXPECT_LT((back.tracks[0].observations[0].pixel - Vec2(300.125, 200.75)).norm(), 1e-9);
  EXPECT_LT((back.tracks[0].color - Vec3(1.0, 128.0 / 255.0, 0.0)).norm(), 1e-12);
}

TEST(ColmapExport, IdentityPoseIsCanonical) {
  const auto dir = fresh_dir("colmap_identity");
  Reconstruction r;
  r.intrinsics[0] = CameraIntrinsics::centered(100, 64, 48);
  r.poses[0] = Pose::identity();
  export_colmap_text(r, dir);
  const auto lines = records(dir + "/images.txt");
  ASSERT_GE(lines.size(), 1u);
  EXPECT_EQ(lines[0], "1 1 0 0 0 0 0 0 1 image_0000.png");
  EXPECT_EQ(records(dir + "/cameras.txt")[0], "1 PINHOLE 64 48 100 100 32 24");
}

TEST(ColmapExport, EmptyReconstructionHasHeadersOnly) {
  const auto dir = fresh_dir("colmap_empty");
  export_colmap_text(Reconstruction{}, dir);
  for (const char* f : {"cameras.txt", "images.txt", "points3D.txt"}) {
    EXPECT_TRUE(records(dir + "/" + f).empty()) << f;
    EXPECT_EQ(slurp(dir + "/" + f).substr(0, 1), "#") << f;
  }
  const auto back = read_colmap_text(dir);
  EXPECT_TRUE(back.poses.empty());
  EXPECT_TRUE(back.tracks.empty());
}

TEST(ColmapExport, SceneRoundTripAndByteStability) {
  const auto scene = generate_scene(6, 120, Layout::kOrbit, 3);
  const auto r = oracle::reconstruction_from_scene(scene);
  const auto a = fresh_dir("colmap_scene_a"), b = fresh_dir("colmap_scene_b");
  export_colmap_text(r, a);
  export_colmap_text(r, b);
  for (const char* f : {"cameras.txt", "images.txt", "points3D.txt"})
    EXPECT_EQ(slurp(a + "/" + f), slurp(b + "/" + f)) << f;

  const auto back = read_colmap_text(a);
  ASSERT_EQ(back.poses.size(), r.poses.size());
  for (const auto& [i, T] : r.poses) {
    EXPECT_LT((back.poses.at(i).rotation - T.rotation).norm(), 1e-9);
    EXPECT_LT((back.poses.at(i).translation - T.translation).norm(), 1e-9);
  }
  ASSERT_EQ(back.tracks.size(), r.tracks.size());
  for (size_t k = 0; k < r.tracks.size(); ++k) {
    EXPECT_EQ(back.tracks[k].id, r.tracks[k].id);
    EXPECT_LT((*back.tracks[k].point - *r.tracks[k].point).norm(), 1e-9);
    ASSERT_EQ(back.tracks[k].observations.size(), r.tracks[k].observations.size());
    for (size_t o = 0; o < r.tracks[k].observations.size(); ++o) {
      EXPECT_EQ(back.tracks[k].observations[o].image, r.tracks[k].observations[o].image);
      EXPECT_LT((back.tracks[k].observations[o].pixel - r.tracks[k].observations[o].pixel).norm(), 1e-9);
    }
  }
  // Noise-free ground truth: every point's mean reprojection error is ~0.
  for (const auto& line : records(a + "/points3D.txt")) {
    std::istringstream s(line);
    double v;
    for (int i = 0; i < 7; ++i) s >> v;
    s >> v;
    EXPECT_LT(v, 1e-9);
  }
}

TEST(ColmapExport, QuaternionMatchesRotation) {
  Rng rng(4, Stream::kTest, 0);
  for (int k = 0; k < 200; ++k) {
    const Mat3 R = rng.rotation();
    const Eigen::Vector4d q = rotation_to_quaternion(R);
    EXPECT_GE(q[0], 0.0);
    EXPECT_NEAR(q.norm(), 1.0, 1e-14);
    const Eigen::Quaterniond e(q[0], q[1], q[2], q[3]);
    EXPECT_LT((e.toRotationMatrix() - R).norm(), 1e-12);
  }
}

}  // namespace

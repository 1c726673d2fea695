#pragma once

// COLMAP text export (cameras.txt, images.txt, points3D.txt) and a minimal
// reader for round trips. PINHOLE cameras, one per image; quaternions are
// Hamilton, w first, world-to-camera. Ids are internal ids + 1.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "jsfm/bundle_adjustment.hpp"
#include "jsfm/error.hpp"
#include "jsfm/geometry.hpp"
#include "jsfm/types.hpp"

namespace jsfm {

namespace detail {

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v + 0.0);  // + 0.0 folds -0 into 0
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot write " + p.string());
  return f;
}

inline std::string image_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "image_%04d.png", id);
  return buf;
}

}  // namespace detail

inline void export_colmap_text(const Reconstruction& rec, const std::string& dir) {
  namespace fs = std::filesystem;
  using detail::fmt_g;
  fs::create_directories(dir);

  // Per image: observation list and the index of each (track) in it.
  std::map<int, std::vector<std::pair<Vec2, int>>> points2d;
  std::vector<std::vector<std::pair<int, int>>> track_refs(rec.tracks.size());
  for (size_t k = 0; k < rec.tracks.size(); ++k) {
    for (const auto& o : rec.tracks[k].observations) {
      auto& list = points2d[o.image];
      track_refs[k].push_back({o.image, static_cast<int>(list.size())});
      list.push_back({o.pixel, rec.tracks[k].point ? rec.tracks[k].id + 1 : -1});
    }
  }

  {
    auto f = detail::open_out(fs::path(dir) / "cameras.txt");
    f << "# Camera list with one line of data per camera:\n"
      << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
      << "# Number of cameras: " << rec.poses.size() << "\n";
    for (const auto& [i, T] : rec.poses) {
      const auto& K = rec.intrinsics.at(i);
      f << i + 1 << " PINHOLE " << K.width << " " << K.height << " " << fmt_g(K.focal_x) << " "
        << fmt_g(K.focal_y) << " " << fmt_g(K.principal_point.x()) << " " << fmt_g(K.principal_point.y()) << "\n";
    }
  }
  {
    auto f = detail::open_out(fs::path(dir) / "images.txt");
    size_t n_obs = 0;
    for (const auto& [i, list] : points2d) n_obs += list.size();
    f << "# Image list with two lines of data per image:\n"
      << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
      << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"
      << "# Number of images: " << rec.poses.size() << ", mean observations per image: "
      << fmt_g(rec.poses.empty() ? 0.0 : static_cast<double>(n_obs) / rec.poses.size()) << "\n";
    for (const auto& [i, T] : rec.poses) {
      const Eigen::Vector4d q = rotation_to_quaternion(T.rotation);
      f << i + 1;
      for (int k = 0; k < 4; ++k) f << " " << fmt_g(q[k]);
      for (int k = 0; k < 3; ++k) f << " " << fmt_g(T.translation[k]);
      f << " " << i + 1 << " " << detail::image_name(i) << "\n";
      bool first = true;
      if (auto it = points2d.find(i); it != points2d.end())
        for (const auto& [px, pid] : it->second) {
          f << (first ? "" : " ") << fmt_g(px.x()) << " " << fmt_g(px.y()) << " " << pid;
          first = false;
        }
      f << "\n";
    }
  }
  {
    auto f = detail::open_out(fs::path(dir) / "points3D.txt");
    size_t n_pts = 0, n_len = 0;
    for (size_t k = 0; k < rec.tracks.size(); ++k)
      if (rec.tracks[k].point) {
        ++n_pts;
        n_len += rec.tracks[k].observations.size();
      }
    f << "# 3D point list with one line of data per point:\n"
      << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n"
      << "# Number of points: " << n_pts
      << ", mean track length: " << fmt_g(n_pts ? static_cast<double>(n_len) / n_pts : 0.0) << "\n";
    for (size_t k = 0; k < rec.tracks.size(); ++k) {
      const auto& t = rec.tracks[k];
      if (!t.point) continue;
      double err = 0.0;
      for (const auto& o : t.observations) {
        const auto px = try_project(rec.intrinsics.at(o.image), rec.poses.at(o.image), *t.point);
        err += px ? (*px - o.pixel).norm() : 0.0;
      }
      err /= std::max<size_t>(1, t.observations.size());
      f << t.id + 1;
      for (int a = 0; a < 3; ++a) f << " " << fmt_g((*t.point)[a]);
      for (int a = 0; a < 3; ++a) f << " " << static_cast<int>(std::lround(std::clamp(t.color[a], 0.0, 1.0) * 255.0));
      f << " " << fmt_g(err);
      for (const auto& [img, idx] : track_refs[k]) f << " " << img + 1 << " " << idx;
      f << "\n";
    }
  }
}

/// Minimal reader for files written by export_colmap_text.
inline Reconstruction read_colmap_text(const std::string& dir) {
  namespace fs = std::filesystem;
  auto lines = [&](const char* name) {
    std::ifstream f(fs::path(dir) / name);
    require(static_cast<bool>(f), ErrorKind::kIo, std::string("cannot read ") + name);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line))
      if (line.empty() || line[0] != '#') out.push_back(line);
    return out;
  };
  Reconstruction rec;
  for (const auto& l : lines("cameras.txt")) {
    std::istringstream s(l);
    int id;
    std::string model;
    CameraIntrinsics K;
    s >> id >> model >> K.width >> K.height >> K.focal_x >> K.focal_y >> K.principal_point.x() >>
        K.principal_point.y();
    require(static_cast<bool>(s) && model == "PINHOLE", ErrorKind::kIo, "bad camera line: " + l);
    rec.intrinsics[id - 1] = K;
  }
  // Image lines come in pairs; the second may be empty, so re-read raw.
  std::map<int, std::vector<std::pair<Vec2, int>>> points2d;
  {
    std::ifstream f(fs::path(dir) / "images.txt");
    require(static_cast<bool>(f), ErrorKind::kIo, "cannot read images.txt");
    std::string line;
    while (std::getline(f, line)) {
      if (!line.empty() && line[0] == '#') continue;
      if (line.empty()) continue;
      std::istringstream s(line);
      int id, cam;
      Eigen::Vector4d q;
      Vec3 t;
      std::string name;
      s >> id >> q[0] >> q[1] >> q[2] >> q[3] >> t[0] >> t[1] >> t[2] >> cam >> name;
      require(static_cast<bool>(s), ErrorKind::kIo, "bad image line: " + line);
      rec.poses[id - 1] = Pose{quaternion_to_rotation(q), t};
      std::string obs;
      std::getline(f, obs);
      std::istringstream o(obs);
      double x, y;
      int pid;
      while (o >> x >> y >> pid) points2d[id - 1].push_back({Vec2(x, y), pid});
    }
  }
  for (const auto& l : lines("points3D.txt")) {
    std::istringstream s(l);
    int id;
    Vec3 X;
    int r, g, b;
    double err;
    s >> id >> X[0] >> X[1] >> X[2] >> r >> g >> b >> err;
    require(static_cast<bool>(s), ErrorKind::kIo, "bad point line: " + l);
    Track t;
    t.id = id - 1;
    t.point = X;
    t.color = Vec3(r, g, b) / 255.0;
    int img, idx;
    while (s >> img >> idx) {
      const auto& list = points2d.at(img - 1);
      require(idx >= 0 && idx < static_cast<int>(list.size()), ErrorKind::kIo, "bad POINT2D_IDX");
      t.observations.push_back({img - 1, list[idx].first, -1});
    }
    rec.tracks.push_back(t);
  }
  return rec;
}

}  // namespace jsfm

// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic synthetic scenes: a spinning multi-beam LiDAR ray-cast against
// a ground plane and yawed boxes, a KITTI-style camera calibration, and a
// smooth quarter-resolution image feature map. All randomness comes from
// voxfuse::Rng seeded with SceneSpec::seed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "voxfuse/analytics.hpp"
#include "voxfuse/calib.hpp"
#include "voxfuse/kitti.hpp"
#include "voxfuse/npy.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/tensor.hpp"
#include "voxfuse/text.hpp"

namespace voxfuse {

struct LidarModel {
  int beams = 64;
  double elevation_top_deg = 2.0;
  double elevation_bottom_deg = -24.8;
  double azimuth_resolution_deg = 0.2;
  double max_range = 80.0;
  double sensor_height = 1.73;  // ground plane at z = -sensor_height
};

struct CameraModel {
  std::size_t width = 1242;
  std::size_t height = 375;
  double fx = 721.5377;
  double fy = 721.5377;
  double cx = 609.5593;
  double cy = 172.854;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int objects = 8;
  double x_min = 5.0, x_max = 60.0;
  double y_min = -15.0, y_max = 15.0;
  LidarModel lidar;
  CameraModel camera;
  int feature_bumps = 24;
  double feature_amplitude = 1.0;

  void validate() const {
    if (lidar.beams < 1) throw ArgumentError("LiDAR needs at least one beam");
    if (!(lidar.max_range > 0.0) || !(lidar.azimuth_resolution_deg > 0.0) ||
        !(lidar.sensor_height > 0.0))
      throw ArgumentError("LiDAR ranges must be positive");
    if (camera.width < 16 || camera.height < 16)
      throw ArgumentError("camera must be at least 16 x 16 pixels");
    if (objects < 0) throw ArgumentError("object count must be >= 0");
    if (!(x_max > x_min) || !(y_max > y_min))
      throw ArgumentError("object placement ranges must be non-empty");
  }
};

enum class SurfaceKind { kGround, kBox };

struct Scene {
  Matrix<double> points;             // M x 4: x, y, z, reflectance
  std::vector<SurfaceKind> surface;  // what each return hit
  std::vector<int> box_id;           // -1 for ground
  std::vector<OrientedBox> boxes;
  std::vector<Difficulty> difficulties;
  KittiCalibration calib;
  ImageSize image;
};

/// Ray entry distance into an oriented box, if the ray hits it.
inline std::optional<double> ray_box(const Vec3& origin, const Vec3& dir,
                                     const OrientedBox& box) {
  const Mat3 inv = rotation_z(-box.yaw);
  const Vec3 o = mat_vec(inv, origin - box.center);
  const Vec3 d = mat_vec(inv, dir);
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < 3; ++a) {
    const double half = 0.5 * box.size[a];
    if (d[a] == 0.0) {
      if (o[a] < -half || o[a] > half) return std::nullopt;
      continue;
    }
    double t0 = (-half - o[a]) / d[a];
    double t1 = (half - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 0.0) return std::nullopt;
  return t_near;
}

/// KITTI-like camera: x_cam = -y_lidar, y_cam = -z_lidar, z_cam = x_lidar,
/// with the camera 0.27 m ahead of and 0.08 m below the LiDAR.
inline KittiCalibration make_calibration(const CameraModel& cam) {
  KittiCalibration c;
  c.p2 = {{{cam.fx, 0.0, cam.cx, 0.0},
           {0.0, cam.fy, cam.cy, 0.0},
           {0.0, 0.0, 1.0, 0.0}}};
  c.r0_rect = identity3();
  c.tr_velo_to_cam = {{{0.0, -1.0, 0.0, 0.0},
                       {0.0, 0.0, -1.0, -0.08},
                       {1.0, 0.0, 0.0, -0.27}}};
  return c;
}

/// Pinhole view of the same camera.
inline CalibrationMatrix make_pinhole(const CameraModel& cam) {
  const KittiCalibration k = make_calibration(cam);
  CalibrationMatrix m;
  m.fx = cam.fx;
  m.fy = cam.fy;
  m.cx = cam.cx;
  m.cy = cam.cy;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) m.rotation[i][j] = k.tr_velo_to_cam[i][j];
    m.translation[i] = k.tr_velo_to_cam[i][3];
  }
  return m;
}

inline Difficulty difficulty_for_range(double range) {
  if (range < 20.0) return Difficulty::kEasy;
  if (range < 40.0) return Difficulty::kModerate;
  return Difficulty::kHard;
}

inline Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Scene s;
  s.image = {spec.camera.width, spec.camera.height};
  s.calib = make_calibration(spec.camera);
  const double ground_z = -spec.lidar.sensor_height;

  for (int b = 0; b < spec.objects; ++b) {
    OrientedBox box;
    bool placed = false;
    for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
      box.size = {rng.uniform(3.4, 4.6), rng.uniform(1.5, 1.9),
                  rng.uniform(1.4, 1.7)};
      box.center = {rng.uniform(spec.x_min, spec.x_max),
                    rng.uniform(spec.y_min, spec.y_max),
                    ground_z + 0.5 * box.size[2]};
      box.yaw = rng.uniform(-M_PI, M_PI);
      placed = std::none_of(s.boxes.begin(), s.boxes.end(),
                            [&](const OrientedBox& o) {
                              const Vec3 d = o.center - box.center;
                              return d[0] * d[0] + d[1] * d[1] < 36.0;
                            });
    }
    if (!placed) continue;
    s.boxes.push_back(box);
    s.difficulties.push_back(
        difficulty_for_range(std::hypot(box.center[0], box.center[1])));
  }
  std::vector<double> reflectance(s.boxes.size());
  for (auto& r : reflectance) r = rng.uniform(0.3, 0.9);

  const auto& l = spec.lidar;
  const auto azimuths =
      static_cast<int>(std::lround(360.0 / l.azimuth_resolution_deg));
  const Vec3 origin{0.0, 0.0, 0.0};
  std::vector<double> data;
  for (int beam = 0; beam < l.beams; ++beam) {
    const double el_deg =
        l.beams == 1 ? l.elevation_top_deg
                     : l.elevation_top_deg +
                           (l.elevation_bottom_deg - l.elevation_top_deg) *
                               beam / (l.beams - 1);
    const double el = el_deg * M_PI / 180.0;
    for (int a = 0; a < azimuths; ++a) {
      const double az = (-180.0 + a * l.azimuth_resolution_deg) * M_PI / 180.0;
      const Vec3 dir{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                     std::sin(el)};
      double best = l.max_range;
      int hit = -2;
      if (dir[2] < 0.0) {
        const double t = ground_z / dir[2];
        if (t <= best) {
          best = t;
          hit = -1;
        }
      }
      for (std::size_t b = 0; b < s.boxes.size(); ++b) {
        const auto t = ray_box(origin, dir, s.boxes[b]);
        if (t && *t < best) {
          best = *t;
          hit = static_cast<int>(b);
        }
      }
      if (hit == -2) continue;
      const Vec3 p = best * dir;
      data.insert(data.end(), {p[0], p[1], p[2],
                               hit < 0 ? 0.2 : reflectance[hit]});
      s.surface.push_back(hit < 0 ? SurfaceKind::kGround : SurfaceKind::kBox);
      s.box_id.push_back(hit);
    }
  }
  s.points = Matrix<double>(s.surface.size(), 4, std::move(data));
  return s;
}

/// Quarter-resolution (W/4 x H/4 x C) sum of Gaussian bumps. Every bump has a
/// per-channel amplitude in +-amplitude/bumps, so |value| <= amplitude.
inline FeatureMap<float> generate_feature_map(const SceneSpec& spec,
                                              std::size_t channels) {
  spec.validate();
  if (channels < 1) throw ArgumentError("feature map needs >= 1 channel");
  const std::size_t w = std::max<std::size_t>(spec.camera.width / 4, 1);
  const std::size_t h = std::max<std::size_t>(spec.camera.height / 4, 1);
  FeatureMap<float> f(w, h, channels);
  const int bumps = std::max(spec.feature_bumps, 0);
  if (bumps == 0) return f;
  Rng rng(spec.seed ^ 0x3c6ef372fe94f82bULL);
  struct Bump {
    double x, y, inv_two_sigma2;
    std::vector<double> amp;
  };
  std::vector<Bump> list(bumps);
  const double max_amp = spec.feature_amplitude / bumps;
  for (auto& b : list) {
    b.x = rng.uniform(0.0, static_cast<double>(w));
    b.y = rng.uniform(0.0, static_cast<double>(h));
    const double sigma = rng.uniform(2.0, 12.0);
    b.inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    b.amp.resize(channels);
    for (auto& a : b.amp) a = rng.uniform(-max_amp, max_amp);
  }
  std::vector<double> acc(channels);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const auto& b : list) {
        const double dx = static_cast<double>(x) - b.x;
        const double dy = static_cast<double>(y) - b.y;
        const double g = std::exp(-(dx * dx + dy * dy) * b.inv_two_sigma2);
        for (std::size_t c = 0; c < channels; ++c) acc[c] += b.amp[c] * g;
      }
      for (std::size_t c = 0; c < channels; ++c)
        f.at(x, y, c) = static_cast<float>(acc[c]);
    }
  return f;
}

// Scene directory layout:
//   velodyne.bin        KITTI float32 x, y, z, reflectance records
//   calib.txt           KITTI calib (P2, R0_rect, Tr_velo_to_cam)
//   image_features.npy  float32 (H/4, W/4, C)
//   boxes.txt           one box per line: difficulty cx cy cz l w h yaw
//   scene.txt           image_width / image_height / seed as key: value
//   augmentation.txt    optional, see kitti::serialize_augmentation

struct SceneFiles {
  Matrix<double> points;
  KittiCalibration calib;
  ImageSize image;
  std::vector<OrientedBox> boxes;
  std::vector<Difficulty> difficulties;
  FeatureMap<float> features{1, 1, 1};
  AugmentationRecord augmentation;
  std::uint64_t seed = 0;
};

inline std::string serialize_boxes(std::span<const OrientedBox> boxes,
                                   std::span<const Difficulty> labels) {
  std::string out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    out += to_string(labels[i]);
    for (double v : {b.center[0], b.center[1], b.center[2], b.size[0],
                     b.size[1], b.size[2], b.yaw})
      out += " " + text::format_double(v);
    out += "\n";
  }
  return out;
}

inline void parse_boxes(std::string_view contents,
                        std::vector<OrientedBox>& boxes,
                        std::vector<Difficulty>& labels) {
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    auto end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    const auto toks = text::split_ws(text::trim(contents.substr(pos, end - pos)));
    pos = end + 1;
    if (toks.empty()) continue;
    if (toks.size() != 8) throw ParseError("box line needs 8 fields");
    Difficulty d;
    if (toks[0] == "easy")
      d = Difficulty::kEasy;
    else if (toks[0] == "moderate")
      d = Difficulty::kModerate;
    else if (toks[0] == "hard")
      d = Difficulty::kHard;
    else
      throw ParseError("unknown difficulty '" + std::string(toks[0]) + "'");
    double v[7];
    for (int i = 0; i < 7; ++i) v[i] = text::parse_double(toks[i + 1], "box");
    boxes.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, v[6]});
    labels.push_back(d);
  }
}

inline void write_scene(const Scene& scene, const FeatureMap<float>& features,
                        std::uint64_t seed, const std::filesystem::path& dir,
                        const AugmentationRecord& augmentation = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  kitti::write_velodyne(scene.points.cast<float>(), dir / "velodyne.bin");
  kitti::write_calib(scene.calib, dir / "calib.txt");
  npy::write(features.to_tensor(), dir / "image_features.npy");
  kitti::detail::write_file(dir / "boxes.txt",
                            serialize_boxes(scene.boxes, scene.difficulties));
  kitti::detail::write_file(
      dir / "scene.txt", "image_width: " + std::to_string(scene.image.width) +
                             "\nimage_height: " +
                             std::to_string(scene.image.height) +
                             "\nseed: " + std::to_string(seed) + "\n");
  if (!augmentation.transforms.empty())
    kitti::detail::write_file(dir / "augmentation.txt",
                              kitti::serialize_augmentation(augmentation));
}

inline SceneFiles read_scene(const std::filesystem::path& dir) {
  for (const char* name :
       {"velodyne.bin", "calib.txt", "image_features.npy", "scene.txt"})
    if (!std::filesystem::exists(dir / name))
      throw IoError("scene file missing: " + (dir / name).string());
  SceneFiles s;
  s.points = kitti::read_velodyne(dir / "velodyne.bin").cast<double>();
  s.calib = kitti::parse_calib(dir / "calib.txt");
  s.features = FeatureMap<float>(npy::read_as<float>(dir / "image_features.npy"));
  const std::string meta = kitti::detail::read_file(dir / "scene.txt");
  std::size_t pos = 0;
  while (pos <= meta.size()) {
    auto end = meta.find('\n', pos);
    if (end == std::string::npos) end = meta.size();
    const std::string_view line =
        text::trim(std::string_view(meta).substr(pos, end - pos));
    pos = end + 1;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const auto key = text::trim(line.substr(0, colon));
    const auto value = line.substr(colon + 1);
    if (key == "image_width")
      s.image.width = text::parse_u64(value, "image_width");
    else if (key == "image_height")
      s.image.height = text::parse_u64(value, "image_height");
    else if (key == "seed")
      s.seed = text::parse_u64(value, "seed");
  }
  if (s.image.width == 0 || s.image.height == 0)
    throw ParseError(dir.string() + "/scene.txt lacks the image size");
  if (std::filesystem::exists(dir / "boxes.txt"))
    parse_boxes(kitti::detail::read_file(dir / "boxes.txt"), s.boxes,
                s.difficulties);
  if (std::filesystem::exists(dir / "augmentation.txt"))
    s.augmentation = kitti::parse_augmentation_text(
        kitti::detail::read_file(dir / "augmentation.txt"));
  return s;
}

}  // namespace voxfuse

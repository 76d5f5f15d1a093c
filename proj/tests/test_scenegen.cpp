// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace voxfuse;
using testutil::TempDir;

namespace {

SceneSpec small_scene(std::uint64_t seed, int objects = 6) {
  SceneSpec s;
  s.seed = seed;
  s.lidar.beams = 16;
  s.lidar.azimuth_resolution_deg = 0.5;
  s.objects = objects;
  return s;
}

}  // namespace

TEST(SceneGen, DeterministicPerSeed) {
  const Scene a = generate_scene(small_scene(5));
  const Scene b = generate_scene(small_scene(5));
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.boxes, b.boxes);
  const Scene c = generate_scene(small_scene(6));
  EXPECT_FALSE(a.points == c.points);
}

TEST(SceneGen, ZeroObjectsGivesGroundOnly) {
  const Scene s = generate_scene(small_scene(1, 0));
  EXPECT_TRUE(s.boxes.empty());
  ASSERT_GT(s.points.rows(), 0u);
  for (std::size_t i = 0; i < s.points.rows(); ++i) {
    EXPECT_EQ(s.surface[i], SurfaceKind::kGround);
    EXPECT_EQ(s.box_id[i], -1);
    EXPECT_NEAR(s.points(i, 2), -1.73, 1e-9);
  }
}

TEST(SceneGen, ReturnsLieOnTheSurfaceTheyHit) {
  const SceneSpec spec = small_scene(2, 10);
  const Scene s = generate_scene(spec);
  std::size_t box_hits = 0;
  for (std::size_t i = 0; i < s.points.rows(); ++i) {
    const Vec3 p{s.points(i, 0), s.points(i, 1), s.points(i, 2)};
    EXPECT_LE(norm(p), spec.lidar.max_range + 1e-9);
    if (s.box_id[i] < 0) {
      EXPECT_NEAR(p[2], -spec.lidar.sensor_height, 1e-9);
      continue;
    }
    ++box_hits;
    const auto& b = s.boxes[s.box_id[i]];
    const Vec3 local = to_box_frame(b, p);
    double on_face = 1e9;
    for (int a = 0; a < 3; ++a) {
      EXPECT_LE(std::abs(local[a]), 0.5 * b.size[a] + 1e-9);
      on_face = std::min(on_face, std::abs(std::abs(local[a]) - 0.5 * b.size[a]));
    }
    EXPECT_LT(on_face, 1e-9);
    // No other box is hit earlier along the same ray.
    const Vec3 dir = (1.0 / norm(p)) * p;
    for (std::size_t o = 0; o < s.boxes.size(); ++o) {
      const auto t = ray_box({0, 0, 0}, dir, s.boxes[o]);
      if (t) EXPECT_GE(*t, norm(p) - 1e-9);
    }
  }
  EXPECT_GT(box_hits, 0u);
}

TEST(SceneGen, RayBoxAnalytic) {
  const OrientedBox b{{10, 0, 0}, {2, 2, 2}, 0.0};
  const auto t = ray_box({0, 0, 0}, {1, 0, 0}, b);
  ASSERT_TRUE(t);
  EXPECT_DOUBLE_EQ(*t, 9.0);
  EXPECT_FALSE(ray_box({0, 0, 0}, {-1, 0, 0}, b));
  EXPECT_FALSE(ray_box({0, 0, 0}, {0, 1, 0}, b));
  const OrientedBox r{{10, 0, 0}, {2, 2, 2}, M_PI / 4};
  EXPECT_NEAR(*ray_box({0, 0, 0}, {1, 0, 0}, r), 10.0 - std::sqrt(2.0), 1e-12);
}

TEST(SceneGen, BoxesSitOnTheGroundAndGetDifficulties) {
  const Scene s = generate_scene(small_scene(3, 8));
  ASSERT_EQ(s.boxes.size(), s.difficulties.size());
  for (std::size_t i = 0; i < s.boxes.size(); ++i) {
    const auto& b = s.boxes[i];
    EXPECT_NEAR(b.center[2] - 0.5 * b.size[2], -1.73, 1e-12);
    EXPECT_EQ(s.difficulties[i],
              difficulty_for_range(std::hypot(b.center[0], b.center[1])));
  }
}

TEST(SceneGen, CalibrationLooksForward) {
  const CameraModel cam;
  const auto k = make_calibration(cam);
  const std::vector<Vec3> ahead{{20, 0, 0}};
  const auto p = project_points(ahead, k, {cam.width, cam.height});
  EXPECT_TRUE(p.valid[0]);
  EXPECT_NEAR(p.pixels[0].u, cam.cx, 1.0);
  EXPECT_NEAR(p.depths[0], 20.0, 0.5);
}

TEST(FeatureMapGen, ShapeDeterminismAndZeroBumps) {
  SceneSpec spec = small_scene(4);
  const auto a = generate_feature_map(spec, 16);
  EXPECT_EQ(a.width(), 310u);
  EXPECT_EQ(a.height(), 93u);
  EXPECT_EQ(a.channels(), 16u);
  EXPECT_EQ(a, generate_feature_map(spec, 16));
  for (float v : a.data()) EXPECT_LE(std::abs(v), spec.feature_amplitude + 1e-6);
  spec.feature_bumps = 0;
  for (float v : generate_feature_map(spec, 4).data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(generate_feature_map(spec, 0), ArgumentError);
}

TEST(SceneFiles, WriteReadRoundTrip) {
  TempDir dir("scene");
  const SceneSpec spec = small_scene(8);
  const Scene s = generate_scene(spec);
  const auto f = generate_feature_map(spec, 16);
  const AugmentationRecord aug{{FlipY{}, RotateZ{0.1}}};
  write_scene(s, f, 8, dir.path(), aug);
  const SceneFiles r = read_scene(dir.path());
  EXPECT_EQ(r.points, s.points.cast<float>().cast<double>());
  EXPECT_EQ(r.calib.p2, s.calib.p2);
  EXPECT_EQ(r.calib.tr_velo_to_cam, s.calib.tr_velo_to_cam);
  EXPECT_EQ(r.image, s.image);
  EXPECT_EQ(r.boxes, s.boxes);
  EXPECT_EQ(r.difficulties, s.difficulties);
  EXPECT_EQ(r.features, f);
  EXPECT_EQ(r.augmentation.transforms, aug.transforms);
  EXPECT_EQ(r.seed, 8u);

  // Re-serializing what was read gives the same bytes.
  const auto bin = testutil::read_bytes(dir / "velodyne.bin");
  const auto calib = testutil::read_bytes(dir / "calib.txt");
  kitti::write_velodyne(r.points.cast<float>(), dir / "again.bin");
  kitti::write_calib(r.calib, dir / "again.txt");
  EXPECT_EQ(testutil::read_bytes(dir / "again.bin"), bin);
  EXPECT_EQ(testutil::read_bytes(dir / "again.txt"), calib);
}

TEST(SceneFiles, MissingFileNamesIt) {
  TempDir dir("scene");
  try {
    read_scene(dir.path());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("velodyne.bin"), std::string::npos);
  }
}

TEST(SceneSpecValidation, RejectsNonsense) {
  SceneSpec s;
  s.lidar.beams = 0;
  EXPECT_THROW(s.validate(), ArgumentError);
  s = {};
  s.objects = -1;
  EXPECT_THROW(s.validate(), ArgumentError);
}

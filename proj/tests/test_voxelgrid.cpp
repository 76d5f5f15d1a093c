// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace voxfuse;
using testutil::TempDir;

TEST(VoxelGrid, DefaultExtents) {
  const VoxelGridSpec g;
  EXPECT_EQ(g.extents(), (std::array<std::int64_t, 3>{1408, 1600, 40}));
  VoxelGridSpec s = g;
  s.stride = 8;
  EXPECT_EQ(s.strided_extents(), (std::array<std::int64_t, 3>{176, 200, 5}));
  s.stride = 3;
  EXPECT_EQ(s.strided_extents(), (std::array<std::int64_t, 3>{470, 534, 14}));
}

TEST(VoxelGrid, IndicesToWorldExamples) {
  VoxelGridSpec g;
  const Vec3 a = g.to_world({0, 0, 0});
  EXPECT_EQ(a, (Vec3{0.0, -40.0, -3.0}));
  g.stride = 2;
  const Vec3 b = g.to_world({2, 1, 3});
  EXPECT_NEAR(b[0], 0.2, 1e-12);
  EXPECT_NEAR(b[1], -39.9, 1e-12);
  EXPECT_NEAR(b[2], -2.4, 1e-12);
}

TEST(VoxelGrid, CenterOffsetShiftsByHalfVoxel) {
  VoxelGridSpec g;
  g.voxel_center_offset = true;
  const Vec3 w = g.to_world({0, 0, 0});
  EXPECT_NEAR(w[0], 0.025, 1e-12);
  EXPECT_NEAR(w[2], -2.95, 1e-12);
}

TEST(VoxelGrid, WorldToIndexInvertsCorners) {
  Rng rng(6);
  for (int stride : {1, 2, 4, 8}) {
    for (bool center : {false, true}) {
      VoxelGridSpec g;
      g.stride = stride;
      g.voxel_center_offset = center;
      const auto e = g.strided_extents();
      std::set<Index3> unique;
      for (int i = 0; i < 500; ++i)
        unique.insert({static_cast<int>(rng.below(e[0])),
                       static_cast<int>(rng.below(e[1])),
                       static_cast<int>(rng.below(e[2]))});
      const std::vector<Index3> idx(unique.begin(), unique.end());
      SparseVoxelTensor t(g, idx, Matrix<double>(idx.size(), 1));
      const auto world = indices_to_world(t);
      EXPECT_EQ(world_to_indices(g, world), idx);
    }
  }
}

TEST(VoxelGrid, Validate) {
  VoxelGridSpec g;
  EXPECT_NO_THROW(g.validate());
  g.voxel_size[1] = 0.0;
  EXPECT_THROW(g.validate(), ArgumentError);
  g = {};
  g.range_max[2] = g.range_min[2];
  EXPECT_THROW(g.validate(), ArgumentError);
  g = {};
  g.stride = 0;
  EXPECT_THROW(g.validate(), ArgumentError);
}

TEST(Voxelize, MinimumCornerAndMean) {
  const VoxelGridSpec g;
  Matrix<double> pts(3, 4, std::vector<double>{0.0, -40.0, -3.0, 0.5,
                                               1.0, 1.0, 0.0, 0.2,
                                               1.01, 1.01, 0.01, 0.4});
  const auto t = voxelize(pts, g, 5);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.indices()[0], (Index3{0, 0, 0}));
  EXPECT_EQ(t.features()(0, 3), 0.5);
  EXPECT_NEAR(t.features()(1, 0), 1.005, 1e-12);
  EXPECT_NEAR(t.features()(1, 3), 0.3, 1e-12);
}

TEST(Voxelize, EmptyAndOutOfRange) {
  const VoxelGridSpec g;
  EXPECT_EQ(voxelize(Matrix<double>(0, 4), g, 5).size(), 0u);
  Matrix<double> pts(2, 4, std::vector<double>{-1, 0, 0, 0, 70.4, 0, 0, 0});
  const auto t = voxelize(pts, g, 5);
  EXPECT_EQ(t.size(), 0u);
  EXPECT_EQ(t.channels(), 4u);
}

TEST(Voxelize, MatchesMapOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    VoxelGridSpec g;
    g.voxel_size = {0.5, 0.5, 0.25};
    g.range_min = {0, -5, -2};
    g.range_max = {10, 5, 1};
    Matrix<double> pts(3000, 5);
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      pts(i, 0) = rng.uniform(-1, 11);
      pts(i, 1) = rng.uniform(-6, 6);
      pts(i, 2) = rng.uniform(-2.5, 1.5);
      pts(i, 3) = rng.uniform();
      pts(i, 4) = rng.normal();
    }
    const std::size_t cap = 1 + seed % 4;
    const auto t = voxelize(pts, g, cap);
    const auto ref = oracle::voxelize(pts, g, cap);
    ASSERT_EQ(t.size(), ref.size());
    std::size_t r = 0;
    for (const auto& [idx, feat] : ref) {
      ASSERT_EQ(t.indices()[r], idx);
      for (std::size_t c = 0; c < feat.size(); ++c)
        EXPECT_NEAR(t.features()(r, c), feat[c], 1e-12);
      ++r;
    }
  }
}

TEST(Offsets, CountsAndEnumeration) {
  EXPECT_TRUE(neighbor_offsets(1).empty());
  EXPECT_EQ(neighbor_offsets(3).size(), 26u);
  const auto five = neighbor_offsets(5);
  EXPECT_EQ(five.size(), 124u);
  std::set<Index3> brute;
  for (int x = -2; x <= 2; ++x)
    for (int y = -2; y <= 2; ++y)
      for (int z = -2; z <= 2; ++z)
        if (x || y || z) brute.insert({x, y, z});
  EXPECT_EQ(std::set<Index3>(five.begin(), five.end()), brute);
  EXPECT_TRUE(std::is_sorted(five.begin(), five.end()));
  EXPECT_EQ(kernel_offsets(3).size(), 27u);
  EXPECT_EQ(kernel_offsets(3)[13], (Index3{0, 0, 0}));
  EXPECT_THROW(neighbor_offsets(4), ArgumentError);
  EXPECT_THROW(kernel_offsets(0), ArgumentError);
}

TEST(SparseTensor, LookupAndValidation) {
  VoxelGridSpec g;
  std::vector<Index3> idx{{1, 2, 3}, {4, 5, 6}};
  SparseVoxelTensor t(g, idx, Matrix<double>(2, 3));
  EXPECT_EQ(t.lookup({4, 5, 6}), std::optional<std::size_t>(1));
  EXPECT_EQ(t.lookup({1, 2, 3}), std::optional<std::size_t>(0));
  EXPECT_FALSE(t.lookup({0, 0, 0}));
  EXPECT_FALSE(t.lookup({-1, 2, 3}));
  EXPECT_FALSE(t.lookup({100000, 2, 3}));
  EXPECT_THROW(SparseVoxelTensor(g, idx, Matrix<double>(3, 3)), ArgumentError);
  EXPECT_THROW(SparseVoxelTensor(g, {{1, 2, 3}, {1, 2, 3}}, Matrix<double>(2, 1)),
               ArgumentError);
  EXPECT_THROW(SparseVoxelTensor(g, {{-1, 0, 0}}, Matrix<double>(1, 1)),
               ArgumentError);
}

TEST(SparseTensor, FileRoundTrip) {
  TempDir dir("sparse");
  Rng rng(3);
  auto t = testutil::random_sparse(rng, 6, 5, 4, 0.3, 7);
  write_sparse(t, dir / "x");
  const auto back = read_sparse(dir / "x");
  EXPECT_EQ(back.spec(), t.spec());
  EXPECT_EQ(back.indices(), t.indices());
  for (std::size_t i = 0; i < t.features().data().size(); ++i)
    EXPECT_EQ(back.features().data()[i],
              static_cast<double>(static_cast<float>(t.features().data()[i])));
  EXPECT_EQ(parse_spec(serialize_spec(t.spec())), t.spec());
}

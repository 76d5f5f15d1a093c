// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace voxfuse;
using testutil::random_sparse;

namespace {

SubmanifoldWeights zero_weights(std::size_t c) {
  SubmanifoldWeights w = SubmanifoldWeights::init(3, c, 0);
  for (auto& v : w.weight.data()) v = 0.0;
  for (auto& v : w.bias) v = 0.0;
  return w;
}

ImportanceScores constant_scores(std::size_t n, double fore, double expand) {
  ImportanceScores s{Matrix<double>(n, 27, expand), 3,
                     ScoreLayout::kExpandThenFore};
  for (std::size_t i = 0; i < n; ++i) s.values(i, 26) = fore;
  return s;
}

SparseVoxelTensor single_voxel(Index3 at, std::vector<double> f, int ext = 8) {
  VoxelGridSpec g;
  g.voxel_size = {1, 1, 1};
  g.range_min = {0, 0, 0};
  g.range_max = {double(ext), double(ext), double(ext)};
  const std::size_t c = f.size();
  return SparseVoxelTensor(g, {at}, Matrix<double>(1, c, std::move(f)));
}

}  // namespace

TEST(Scoring, ZeroWeightsGiveOneHalf) {
  Rng rng(1);
  const auto t = random_sparse(rng, 6, 6, 6, 0.3, 4);
  const auto s = score_importance(t, zero_weights(4));
  for (double v : s.values.data()) EXPECT_EQ(v, 0.5);
}

TEST(Scoring, IsolatedVoxelSeesOnlyCenterTap) {
  const auto t = single_voxel({4, 4, 4}, {0.3, -0.7});
  auto w = SubmanifoldWeights::init(3, 2, 5);
  const auto a = score_importance(t, w);
  const auto taps = kernel_offsets(3);
  for (std::size_t tap = 0; tap < taps.size(); ++tap)
    if (taps[tap] != Index3{0, 0, 0})
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < 27; ++j) w.weight(tap * 2 + c, j) = 42.0;
  EXPECT_EQ(score_importance(t, w).values, a.values);
}

TEST(Scoring, MatchesDenseConvolutionOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const double occ = 0.1 + 0.04 * static_cast<double>(seed);
    const auto t = random_sparse(rng, 8, 8, 8, occ, 6);
    const auto w = SubmanifoldWeights::init(3, 6, seed + 50);
    const auto s = score_importance(t, w);
    const auto ref = oracle::dense_scores(t, w);
    EXPECT_LT(testutil::max_abs_diff(s.values, ref), 1e-12);
    for (double v : s.values.data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Scoring, LargerKernelAndErrors) {
  Rng rng(2);
  const auto t = random_sparse(rng, 7, 7, 7, 0.2, 3);
  const auto w = SubmanifoldWeights::init(5, 3, 3);
  EXPECT_LT(testutil::max_abs_diff(score_importance(t, w).values,
                                   oracle::dense_scores(t, w)),
            1e-12);
  EXPECT_THROW(score_importance(t, SubmanifoldWeights::init(3, 4, 0)),
               ArgumentError);
  EXPECT_THROW(SubmanifoldWeights::init(2, 3, 0), ArgumentError);
}

TEST(Sigmoid, StaysStrictlyInsideUnitInterval) {
  EXPECT_GT(sigmoid(-1e6), 0.0);
  EXPECT_LT(sigmoid(1e6), 1.0);
  EXPECT_EQ(sigmoid(0.0), 0.5);
}

TEST(Split, AllForegroundAndAllBackground) {
  const auto hi = split_foreground_background(constant_scores(5, 0.9, 0.2), 0.5);
  EXPECT_EQ(hi.alpha(), 5u);
  EXPECT_EQ(hi.beta(), 0u);
  const auto lo = split_foreground_background(constant_scores(5, 0.1, 0.9), 0.5);
  EXPECT_EQ(lo.alpha(), 0u);
  EXPECT_EQ(lo.beta(), 5u);
  // Strict comparison: a score equal to T is background.
  EXPECT_EQ(split_foreground_background(constant_scores(3, 0.5, 0.5), 0.5).alpha(),
            0u);
  EXPECT_THROW(split_foreground_background(constant_scores(1, 0.5, 0.5), 1.0),
               ArgumentError);
  EXPECT_THROW(split_foreground_background(constant_scores(1, 0.5, 0.5), 0.0),
               ArgumentError);
}

TEST(Split, ScoreLayoutSelectsForeColumn) {
  ImportanceScores s{Matrix<double>(1, 27, 0.2), 3, ScoreLayout::kForeThenExpand};
  s.values(0, 0) = 0.8;
  EXPECT_EQ(s.fore(0), 0.8);
  EXPECT_EQ(s.expand(0, 0), 0.2);
  s.layout = ScoreLayout::kExpandThenFore;
  EXPECT_EQ(s.fore(0), 0.2);
  EXPECT_EQ(s.expand(0, 0), 0.8);
}

TEST(Expand, TotalDiscardAndUniformWeighting) {
  const auto t = single_voxel({4, 4, 4}, {2.0, -1.0});
  const auto none = constant_scores(1, 0.9, 0.5);
  const auto split = split_foreground_background(none, 0.5);
  EXPECT_EQ(expand_and_discard(t, split, none, 0.5).size(), 0u);

  const auto all = constant_scores(1, 0.9, 0.7);
  const auto e = expand_and_discard(t, split, all, 0.5);
  ASSERT_EQ(e.size(), 26u);
  const auto offsets = neighbor_offsets(3);
  for (std::size_t k = 0; k < 26; ++k) {
    EXPECT_EQ(e.target[k], t.indices()[0] + offsets[k]);
    EXPECT_EQ(e.features(k, 0), 0.7 * 2.0);
    EXPECT_EQ(e.features(k, 1), 0.7 * -1.0);
  }
}

TEST(Expand, OutOfGridTargetsDropped) {
  const auto t = single_voxel({0, 0, 0}, {1.0});
  const auto s = constant_scores(1, 0.9, 0.7);
  const auto e = expand_and_discard(t, split_foreground_background(s, 0.5), s, 0.5);
  EXPECT_EQ(e.size(), 7u);  // only the non-negative octant survives
  for (const auto& idx : e.target)
    for (int a = 0; a < 3; ++a) EXPECT_GE(idx[a], 0);
}

TEST(Assemble, NoExpansionsGivesForegroundSubset) {
  Rng rng(3);
  const auto t = random_sparse(rng, 5, 5, 5, 0.4, 3);
  ImportanceScores s{Matrix<double>(t.size(), 27, 0.1), 3,
                     ScoreLayout::kExpandThenFore};
  for (std::size_t i = 0; i < t.size(); i += 2) s.values(i, 26) = 0.9;
  const auto split = split_foreground_background(s, 0.5);
  const auto d = assemble_dense_foreground(t, split, expand_and_discard(t, split, s, 0.5));
  ASSERT_EQ(d.tensor.size(), split.alpha());
  for (std::size_t r = 0; r < split.alpha(); ++r) {
    EXPECT_EQ(d.tensor.indices()[r], t.indices()[split.fore_rows[r]]);
    EXPECT_TRUE(std::ranges::equal(d.tensor.features().row(r),
                                   t.features().row(split.fore_rows[r])));
  }
}

TEST(Assemble, CollisionKeepsOriginalAndSharedTargetsAverage) {
  VoxelGridSpec g;
  g.voxel_size = {1, 1, 1};
  g.range_min = {0, 0, 0};
  g.range_max = {8, 8, 8};
  // Two foreground voxels two apart along x share the empty site between them
  // and each also sees the other as an occupied neighbor.
  SparseVoxelTensor t(g, {{2, 4, 4}, {4, 4, 4}},
                      Matrix<double>(2, 1, std::vector<double>{1.0, 3.0}));
  ImportanceScores s{Matrix<double>(2, 27, 0.1), 3, ScoreLayout::kExpandThenFore};
  const auto offsets = neighbor_offsets(3);
  for (std::size_t k = 0; k < 26; ++k) {
    if (offsets[k] == Index3{1, 0, 0}) s.values(0, k) = 0.8;   // -> (3,4,4)
    if (offsets[k] == Index3{-1, 0, 0}) s.values(1, k) = 0.6;  // -> (3,4,4)
    if (offsets[k] == Index3{0, 0, 1}) s.values(1, k) = 0.9;   // -> (4,4,5)
  }
  s.values(0, 26) = s.values(1, 26) = 0.95;
  const auto split = split_foreground_background(s, 0.5);
  const auto e = expand_and_discard(t, split, s, 0.5);
  EXPECT_EQ(e.size(), 3u);
  const auto d = assemble_dense_foreground(t, split, e);
  EXPECT_EQ(d.collisions, 0u);
  ASSERT_EQ(d.tensor.size(), 4u);
  EXPECT_EQ(d.tensor.indices()[2], (Index3{3, 4, 4}));
  EXPECT_DOUBLE_EQ(d.tensor.features()(2, 0), (0.8 * 1.0 + 0.6 * 3.0) / 2.0);
  EXPECT_EQ(d.tensor.indices()[3], (Index3{4, 4, 5}));
  EXPECT_DOUBLE_EQ(d.tensor.features()(3, 0), 0.9 * 3.0);

  // Now an expansion straight onto the other (occupied) voxel.
  SparseVoxelTensor adj(g, {{2, 4, 4}, {3, 4, 4}},
                        Matrix<double>(2, 1, std::vector<double>{1.0, 3.0}));
  const auto e2 = expand_and_discard(adj, split, s, 0.5);
  const auto d2 = assemble_dense_foreground(adj, split, e2);
  EXPECT_EQ(d2.collisions, 2u);  // (2,4,4)->(3,4,4) and (3,4,4)->(2,4,4)
  EXPECT_EQ(d2.tensor.features()(1, 0), 3.0);
}

TEST(Assemble, CountMatchesSetArithmetic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto t = random_sparse(rng, 8, 8, 8, 0.25, 4, 3.0);
    const auto w = SubmanifoldWeights::init(3, 4, seed);
    const auto s = score_importance(t, w);
    const auto split = split_foreground_background(s, 0.5);
    const auto e = expand_and_discard(t, split, s, 0.5);
    std::set<Index3> occupied(t.indices().begin(), t.indices().end());
    std::set<Index3> fresh;
    for (const auto& idx : e.target)
      if (!occupied.count(idx)) fresh.insert(idx);
    const auto d = assemble_dense_foreground(t, split, e);
    EXPECT_EQ(d.tensor.size(), split.alpha() + fresh.size());
  }
}

TEST(FbFuse, EmptyInput) {
  VoxelGridSpec g;
  const SparseVoxelTensor t(g, {}, Matrix<double>(0, 4));
  const auto r = fb_fuse(t, {}, SubmanifoldWeights::init(3, 4, 0),
                         SafParameters::init(1, 4, 0));
  EXPECT_EQ(r.output.size(), 0u);
  EXPECT_EQ(r.split.alpha() + r.split.beta(), 0u);
}

TEST(FbFuse, HighThresholdKeepsEverythingAsBackground) {
  Rng rng(4);
  const auto t = random_sparse(rng, 8, 8, 8, 0.3, 4);
  FbConfig cfg;
  cfg.threshold = 0.99;
  const auto r = fb_fuse(t, cfg, SubmanifoldWeights::init(3, 4, 1),
                         SafParameters::init(1, 4, 2));
  EXPECT_EQ(r.split.alpha(), 0u);
  EXPECT_EQ(r.expanded.size(), 0u);
  EXPECT_EQ(r.output.size(), t.size());
  EXPECT_EQ(r.output.indices(), t.indices());
}

TEST(FbFuse, RejectsNonUnitPatchSaf) {
  Rng rng(5);
  const auto t = random_sparse(rng, 4, 4, 4, 0.3, 2);
  EXPECT_THROW(fb_fuse(t, {}, SubmanifoldWeights::init(3, 2, 0),
                       SafParameters::init(9, 2, 0)),
               ArgumentError);
}

TEST(FbFuse, MatchesStraightLineOracle) {
  std::size_t grown = 0, collided = 0;
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    Rng rng(seed + 1000);
    const auto t = random_sparse(rng, 8, 8, 8, 0.1 + 0.03 * (seed % 10), 4, 3.0);
    const auto w = SubmanifoldWeights::init(3, 4, seed);
    const auto saf = SafParameters::init(1, 4, seed + 7);
    FbConfig cfg;
    cfg.threshold = 0.3 + 0.05 * (seed % 8);
    cfg.chunk = seed % 2 ? 32 : 0;
    const auto r = fb_fuse(t, cfg, w, saf);
    const auto ref = oracle::fb_fuse(t, w, saf, cfg.threshold, cfg.chunk);
    EXPECT_EQ(r.split.alpha(), ref.alpha);
    EXPECT_EQ(r.split.beta(), ref.beta);
    EXPECT_EQ(r.expanded.size(), ref.expanded);
    grown += r.dense_foreground - r.split.alpha();
    collided += r.collisions;
    ASSERT_EQ(r.output.size(), ref.output.size());
    for (std::size_t i = 0; i < r.output.size(); ++i) {
      const auto it = ref.output.find(r.output.indices()[i]);
      ASSERT_NE(it, ref.output.end());
      for (std::size_t c = 0; c < 4; ++c)
        EXPECT_NEAR(r.output.features()(i, c), it->second[c], 1e-9);
    }
  }
  EXPECT_GT(grown, 0u);
  EXPECT_GT(collided, 0u);
}

TEST(FbFuse, PartitionMonotonicityBoundsUniqueness) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto t = random_sparse(rng, 10, 10, 6, 0.3, 8, 2.0);
    const auto w = SubmanifoldWeights::init(3, 8, seed);
    const auto saf = SafParameters::init(1, 8, seed);
    std::size_t prev_alpha = t.size() + 1, prev_expanded = SIZE_MAX;
    for (int i = 1; i <= 9; ++i) {
      FbConfig cfg;
      cfg.threshold = 0.1 * i;
      const auto r = fb_fuse(t, cfg, w, saf);
      EXPECT_EQ(r.split.alpha() + r.split.beta(), t.size());
      EXPECT_LE(r.split.alpha(), prev_alpha);
      EXPECT_LE(r.expanded.size(), prev_expanded);
      prev_alpha = r.split.alpha();
      prev_expanded = r.expanded.size();
      for (std::size_t e = 0; e < r.expanded.size(); ++e)
        for (std::size_t c = 0; c < 8; ++c)
          EXPECT_LE(std::abs(r.expanded.features(e, c)),
                    std::abs(t.features()(r.expanded.source[e], c)));
      std::set<Index3> unique(r.output.indices().begin(), r.output.indices().end());
      EXPECT_EQ(unique.size(), r.output.size());
      EXPECT_EQ(r.output.size(), r.dense_foreground + r.split.beta());
    }
  }
}

TEST(FbFuse, Deterministic) {
  Rng rng(6);
  const auto t = random_sparse(rng, 8, 8, 8, 0.3, 4, 3.0);
  const auto w = SubmanifoldWeights::init(3, 4, 9);
  const auto saf = SafParameters::init(1, 4, 9);
  const auto a = fb_fuse(t, {}, w, saf);
  const auto b = fb_fuse(t, {}, w, saf);
  EXPECT_EQ(a.output.indices(), b.output.indices());
  EXPECT_EQ(a.output.features(), b.output.features());
}

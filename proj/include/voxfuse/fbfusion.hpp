// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Foreground-background fusion.
//
// A submanifold convolution followed by a sigmoid predicts, for every voxel,
// K_S^3 importance scores: one for the voxel itself and one per neighbor
// offset. Voxels whose own score exceeds T are foreground. Each foreground
// voxel is copied onto the neighbor sites whose score exceeds T, weighted by
// that score (EXPAND); the remaining neighbor sites stay empty (DISCARD). The
// dense foreground and the untouched background then pass through a K = 1 SAF
// block.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "voxfuse/errors.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/saf.hpp"
#include "voxfuse/tensor.hpp"
#include "voxfuse/voxelgrid.hpp"

namespace voxfuse {

/// Column order of the K_S^3 importance scores. The default puts the K_S^3-1
/// neighbor scores first and the voxel's own score last.
enum class ScoreLayout { kExpandThenFore, kForeThenExpand };

/// Weights of the K_S^3-tap submanifold convolution C -> K_S^3.
/// weight row (tap * C + c) maps input channel c at kernel tap `tap`
/// (kernel_offsets order) to every output score.
struct SubmanifoldWeights {
  int k_s = 3;
  std::size_t channels = 0;
  Matrix<double> weight;
  std::vector<double> bias;

  std::size_t taps() const noexcept {
    return static_cast<std::size_t>(k_s) * k_s * k_s;
  }

  /// Uniform in +-1/sqrt(K_S^3 * C), weight then bias.
  static SubmanifoldWeights init(int k_s, std::size_t channels,
                                 std::uint64_t seed) {
    kernel_offsets(k_s);  // validates k_s
    SubmanifoldWeights w;
    w.k_s = k_s;
    w.channels = channels;
    const std::size_t taps = w.taps();
    w.weight = Matrix<double>(taps * channels, taps);
    w.bias.assign(taps, 0.0);
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(taps * channels));
    for (auto& v : w.weight.data()) v = rng.uniform(-bound, bound);
    for (auto& v : w.bias) v = rng.uniform(-bound, bound);
    return w;
  }

  void validate() const {
    const std::size_t taps = this->taps();
    if (weight.rows() != taps * channels || weight.cols() != taps ||
        bias.size() != taps)
      throw ArgumentError("submanifold weights have inconsistent shape");
    require_finite(weight.data(), "importance weights");
    require_finite(std::span<const double>(bias), "importance weights");
  }
};

struct ImportanceScores {
  Matrix<double> values;  // N x K_S^3, every entry in (0, 1)
  int k_s = 3;
  ScoreLayout layout = ScoreLayout::kExpandThenFore;

  std::size_t size() const noexcept { return values.rows(); }
  std::size_t neighbors() const noexcept { return values.cols() - 1; }

  double fore(std::size_t i) const noexcept {
    return layout == ScoreLayout::kExpandThenFore ? values(i, neighbors())
                                                  : values(i, 0);
  }
  /// Score of neighbor_offsets(k_s)[k] around voxel i.
  double expand(std::size_t i, std::size_t k) const noexcept {
    return layout == ScoreLayout::kExpandThenFore ? values(i, k)
                                                  : values(i, k + 1);
  }
};

inline double sigmoid(double x) noexcept {
  constexpr double lo = 0x1.0p-1022;
  constexpr double hi = 1.0 - 0x1.0p-53;
  return std::clamp(1.0 / (1.0 + std::exp(-x)), lo, hi);
}

/// Submanifold convolution plus sigmoid: outputs only at the N occupied
/// sites; unoccupied neighbors contribute zero.
inline ImportanceScores score_importance(
    const SparseVoxelTensor& t, const SubmanifoldWeights& w,
    ScoreLayout layout = ScoreLayout::kExpandThenFore) {
  w.validate();
  if (!t.empty() && t.channels() != w.channels)
    throw ArgumentError("importance weights expect " +
                        std::to_string(w.channels) + " channels, tensor has " +
                        std::to_string(t.channels()));
  const auto taps = kernel_offsets(w.k_s);
  const std::size_t out_c = taps.size();
  const std::size_t c = w.channels;
  ImportanceScores s{Matrix<double>(t.size(), out_c), w.k_s, layout};
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto o = s.values.row(i);
    std::copy(w.bias.begin(), w.bias.end(), o.begin());
    for (std::size_t tap = 0; tap < taps.size(); ++tap) {
      const auto nb = t.lookup(t.indices()[i] + taps[tap]);
      if (!nb) continue;
      const auto f = t.features().row(*nb);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double x = f[ch];
        const auto wr = w.weight.row(tap * c + ch);
        for (std::size_t j = 0; j < out_c; ++j) o[j] += x * wr[j];
      }
    }
    for (auto& v : o) v = sigmoid(v);
  }
  return s;
}

struct FbSplit {
  std::vector<std::size_t> fore_rows;  // ascending
  std::vector<std::size_t> back_rows;  // ascending

  std::size_t alpha() const noexcept { return fore_rows.size(); }
  std::size_t beta() const noexcept { return back_rows.size(); }
};

inline void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ArgumentError("importance threshold must lie in (0, 1)");
}

/// Foreground iff the voxel's own score is strictly greater than T.
inline FbSplit split_foreground_background(const ImportanceScores& scores,
                                           double threshold) {
  check_threshold(threshold);
  FbSplit s;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (scores.fore(i) > threshold ? s.fore_rows : s.back_rows).push_back(i);
  return s;
}

/// Surviving EXPAND entries in (source row, offset id) order.
struct Expansion {
  std::vector<std::size_t> source;
  std::vector<std::size_t> offset_id;
  std::vector<Index3> target;
  Matrix<double> features;  // entries x C, F_fusion[source] * score

  std::size_t size() const noexcept { return source.size(); }
};

/// EXPAND/DISCARD: for every foreground voxel and neighbor offset k with
/// score > T, emit the weighted copy at index + offset; everything else
/// (including targets outside the grid) is discarded.
inline Expansion expand_and_discard(const SparseVoxelTensor& t,
                                    const FbSplit& split,
                                    const ImportanceScores& scores,
                                    double threshold) {
  check_threshold(threshold);
  if (scores.size() != t.size())
    throw ArgumentError("scores do not match the sparse tensor");
  const auto offsets = neighbor_offsets(scores.k_s);
  const std::size_t c = t.channels();
  Expansion e;
  std::vector<double> feats;
  for (std::size_t i : split.fore_rows) {
    const auto f = t.features().row(i);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      const double w = scores.expand(i, k);
      if (!(w > threshold)) continue;
      const Index3 target = t.indices()[i] + offsets[k];
      if (!t.spec().in_grid(target)) continue;
      e.source.push_back(i);
      e.offset_id.push_back(k);
      e.target.push_back(target);
      for (std::size_t ch = 0; ch < c; ++ch) feats.push_back(f[ch] * w);
    }
  }
  e.features = Matrix<double>(e.size(), c, std::move(feats));
  return e;
}

struct DenseForeground {
  SparseVoxelTensor tensor;      // foreground rows, then new sites
  std::size_t original = 0;      // alpha
  std::size_t added = 0;         // unique new sites
  std::size_t collisions = 0;    // entries dropped on occupied sites
};

/// Union of the foreground voxels and the surviving expansions.
///
/// An expansion onto any originally occupied site is dropped; expansions that
/// share an empty site are averaged. New sites follow the foreground rows in
/// lexicographic index order, and each average is accumulated in
/// (source, offset) order, so the result does not depend on entry order.
inline DenseForeground assemble_dense_foreground(const SparseVoxelTensor& t,
                                                 const FbSplit& split,
                                                 const Expansion& expanded) {
  const std::size_t c = t.channels();
  std::vector<std::size_t> order;
  DenseForeground out;
  for (std::size_t e = 0; e < expanded.size(); ++e) {
    if (t.lookup(expanded.target[e]))
      ++out.collisions;
    else
      order.push_back(e);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(expanded.target[a], expanded.source[a],
                    expanded.offset_id[a]) <
           std::tie(expanded.target[b], expanded.source[b],
                    expanded.offset_id[b]);
  });

  std::vector<Index3> indices;
  std::vector<double> feats;
  for (std::size_t i : split.fore_rows) {
    indices.push_back(t.indices()[i]);
    const auto f = t.features().row(i);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  std::vector<double> acc(c);
  for (std::size_t a = 0; a < order.size();) {
    std::size_t b = a;
    std::fill(acc.begin(), acc.end(), 0.0);
    while (b < order.size() &&
           expanded.target[order[b]] == expanded.target[order[a]]) {
      const auto f = expanded.features.row(order[b]);
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += f[ch];
      ++b;
    }
    const double n = static_cast<double>(b - a);
    indices.push_back(expanded.target[order[a]]);
    for (double v : acc) feats.push_back(v / n);
    ++out.added;
    a = b;
  }
  out.original = split.alpha();
  const std::size_t rows = indices.size();
  out.tensor = SparseVoxelTensor(t.spec(), std::move(indices),
                                 Matrix<double>(rows, c, std::move(feats)));
  return out;
}

struct FbConfig {
  int k_s = 3;
  double threshold = 0.5;
  ScoreLayout layout = ScoreLayout::kExpandThenFore;
  std::size_t chunk = 1024;
};

struct FbResult {
  SparseVoxelTensor output;  // dense foreground rows, then background rows
  ImportanceScores scores;
  FbSplit split;
  Expansion expanded;
  std::size_t dense_foreground = 0;
  std::size_t collisions = 0;
};

/// score -> split -> expand/discard -> assemble -> [F_fore_dense; F_back]
/// -> SAF with K = 1 (patch input = the features, point input = 0).
inline FbResult fb_fuse(const SparseVoxelTensor& t, const FbConfig& config,
                        const SubmanifoldWeights& scorer,
                        const SafParameters& saf) {
  if (saf.patch_size != 1)
    throw ArgumentError("the foreground-background SAF block needs K = 1");
  FbResult r;
  r.scores = score_importance(t, scorer, config.layout);
  r.split = split_foreground_background(r.scores, config.threshold);
  r.expanded = expand_and_discard(t, r.split, r.scores, config.threshold);
  DenseForeground dense = assemble_dense_foreground(t, r.split, r.expanded);
  r.dense_foreground = dense.tensor.size();
  r.collisions = dense.collisions;

  const std::size_t c = t.channels();
  std::vector<Index3> indices = dense.tensor.indices();
  std::vector<double> feats(dense.tensor.features().data().begin(),
                            dense.tensor.features().data().end());
  for (std::size_t i : r.split.back_rows) {
    indices.push_back(t.indices()[i]);
    const auto f = t.features().row(i);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  const std::size_t rows = indices.size();
  Matrix<double> combined(rows, c, std::move(feats));
  const Matrix<double> zeros(rows, c);
  auto fused = saf_forward(combined, zeros, saf, {config.chunk, false});
  r.output = SparseVoxelTensor(t.spec(), std::move(indices),
                               std::move(fused.fusion));
  return r;
}

}  // namespace voxfuse

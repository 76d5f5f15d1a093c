// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Point fusion (one pixel per voxel) and patch fusion (K pixels per voxel).
// Both index the full-resolution image feature plane at the voxel's projected
// sub-pixel position and combine the result with the voxel feature.

#pragma once

#include <algorithm>
#include <array>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "voxfuse/errors.hpp"
#include "voxfuse/tensor.hpp"

namespace voxfuse {

/// How image and voxel features are merged. Addition needs C_I == C_v;
/// concatenation yields C_I + C_v channels laid out [image | voxel].
enum class Combiner { kAdd, kConcat };

/// Integer pixel displacements gathered around each projected voxel.
class PatchPattern {
 public:
  using Offset = std::array<int, 2>;  // (du, dv)

  explicit PatchPattern(std::vector<Offset> offsets)
      : offsets_(std::move(offsets)) {
    if (offsets_.empty()) throw ArgumentError("patch pattern needs >= 1 offset");
    std::set<Offset> seen(offsets_.begin(), offsets_.end());
    if (seen.size() != offsets_.size())
      throw ArgumentError("patch pattern offsets must be distinct");
  }

  /// The Cartesian square {lo..hi}^2, row-major with dv outer.
  static PatchPattern square(int lo, int hi) {
    if (hi < lo) throw ArgumentError("empty patch square");
    std::vector<Offset> o;
    for (int dv = lo; dv <= hi; ++dv)
      for (int du = lo; du <= hi; ++du) o.push_back({du, dv});
    return PatchPattern(std::move(o));
  }

  /// Patterns swept in the K_off ablation: 9 = [-1,0,1]^2,
  /// 16 = [-1..2]^2, 25 = [-2..2]^2, 36 = [-2..3]^2. K = 1 is the degenerate
  /// single-pixel pattern.
  static PatchPattern from_count(int k) {
    switch (k) {
      case 1: return square(0, 0);
      case 9: return square(-1, 1);
      case 16: return square(-1, 2);
      case 25: return square(-2, 2);
      case 36: return square(-2, 3);
      default:
        throw ArgumentError("no standard patch pattern with K = " +
                            std::to_string(k) + " (use 1, 9, 16, 25 or 36)");
    }
  }

  std::size_t size() const noexcept { return offsets_.size(); }
  const std::vector<Offset>& offsets() const noexcept { return offsets_; }

 private:
  std::vector<Offset> offsets_;
};

namespace detail {

inline std::size_t fused_channels(std::size_t c_img, std::size_t c_vox,
                                  Combiner mode) {
  if (mode == Combiner::kAdd && c_img != c_vox)
    throw ArgumentError("additive fusion needs equal channels, image has " +
                        std::to_string(c_img) + " and voxels have " +
                        std::to_string(c_vox));
  return mode == Combiner::kAdd ? c_vox : c_img + c_vox;
}

inline void combine(std::span<const double> sampled,
                    std::span<const double> voxel, Combiner mode,
                    std::span<double> out) noexcept {
  if (mode == Combiner::kAdd) {
    for (std::size_t c = 0; c < voxel.size(); ++c)
      out[c] = sampled[c] + voxel[c];
  } else {
    std::copy(sampled.begin(), sampled.end(), out.begin());
    std::copy(voxel.begin(), voxel.end(), out.begin() + sampled.size());
  }
}

}  // namespace detail

/// F_IV[i] = sample(img, pixels[i]) (+ or concat) voxfeat[i].
template <Real T>
Matrix<double> point_fusion(const FeatureMap<T>& img,
                            std::span<const Pixel> pixels,
                            const Matrix<double>& voxfeat,
                            Combiner mode = Combiner::kAdd) {
  if (pixels.size() != voxfeat.rows())
    throw ArgumentError("point fusion needs one pixel per voxel");
  const std::size_t c_img = img.channels();
  const std::size_t c = detail::fused_channels(c_img, voxfeat.cols(), mode);
  Matrix<double> out(pixels.size(), c);
  std::vector<double> sampled(c_img);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    bilinear_sample_into(img, pixels[i].u, pixels[i].v, sampled);
    detail::combine(sampled, voxfeat.row(i), mode, out.row(i));
  }
  return out;
}

/// F_KIV[i, k] = sample(img, pixels[i] + offset[k]) (+ or concat) voxfeat[i].
/// Returned as N x (K * C): slot k occupies columns [k*C, (k+1)*C), which is
/// the (N, K*C) reshape the SAF block consumes.
template <Real T>
Matrix<double> patch_fusion(const FeatureMap<T>& img,
                            std::span<const Pixel> pixels,
                            const PatchPattern& pattern,
                            const Matrix<double>& voxfeat,
                            Combiner mode = Combiner::kAdd) {
  if (pixels.size() != voxfeat.rows())
    throw ArgumentError("patch fusion needs one pixel per voxel");
  const std::size_t c_img = img.channels();
  const std::size_t c = detail::fused_channels(c_img, voxfeat.cols(), mode);
  const std::size_t k_count = pattern.size();
  Matrix<double> out(pixels.size(), k_count * c);
  std::vector<double> sampled(c_img);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto row = out.row(i);
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto [du, dv] = pattern.offsets()[k];
      bilinear_sample_into(img, pixels[i].u + du, pixels[i].v + dv, sampled);
      detail::combine(sampled, voxfeat.row(i), mode, row.subspan(k * c, c));
    }
  }
  return out;
}

}  // namespace voxfuse

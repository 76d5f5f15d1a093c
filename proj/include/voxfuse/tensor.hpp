// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxfuse/errors.hpp"

namespace voxfuse {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

inline std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

/// Dense row-major n-dimensional array. Every extent is at least 1, so a
/// Tensor is never empty; use Matrix when a zero-row result is legitimate.
template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) throw ArgumentError("tensor shape must have rank >= 1");
    for (auto e : shape_)
      if (e == 0)
        throw ArgumentError("tensor extents must be >= 1, got " +
                            shape_string(shape_));
    if (numel(shape_) != data_.size())
      throw ArgumentError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
  }

  explicit Tensor(std::vector<std::size_t> shape, T fill = T{0})
      : Tensor(shape, std::vector<T>(numel(shape), fill)) {}

  static std::size_t numel(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

/// Row-major 2-D array that may have zero rows. Carries N x C feature blocks
/// (voxel features, fused features) and N x K*C patch blocks.
template <Real T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw ArgumentError("matrix data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(rows_) + "x" +
                          std::to_string(cols_));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  T& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  template <Real U>
  Matrix<U> cast() const {
    return Matrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Sub-pixel image coordinate: u along the width, v along the height.
struct Pixel {
  double u = 0.0;
  double v = 0.0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Dense image feature plane. Stored height-major as (H, W, C) so that the
/// NPY file of a feature map has the usual image layout.
template <Real T>
class FeatureMap {
 public:
  FeatureMap(std::size_t width, std::size_t height, std::size_t channels,
             T fill = T{0})
      : width_(width), height_(height), channels_(channels) {
    if (width == 0 || height == 0 || channels == 0)
      throw ArgumentError("feature map extents must be >= 1");
    data_.assign(width * height * channels, fill);
  }

  /// From a rank-3 tensor shaped (H, W, C).
  explicit FeatureMap(const Tensor<T>& t) {
    if (t.rank() != 3)
      throw ArgumentError("feature map tensor must be (H, W, C), got " +
                          shape_string(t.shape()));
    height_ = t.shape()[0];
    width_ = t.shape()[1];
    channels_ = t.shape()[2];
    data_.assign(t.data().begin(), t.data().end());
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t channels() const noexcept { return channels_; }

  T& at(std::size_t x, std::size_t y, std::size_t c) noexcept {
    return data_[(y * width_ + x) * channels_ + c];
  }
  const T& at(std::size_t x, std::size_t y, std::size_t c) const noexcept {
    return data_[(y * width_ + x) * channels_ + c];
  }
  std::span<const T> pixel(std::size_t x, std::size_t y) const noexcept {
    return {data_.data() + (y * width_ + x) * channels_, channels_};
  }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  Tensor<T> to_tensor() const {
    return Tensor<T>({height_, width_, channels_}, data_);
  }

  template <Real U>
  FeatureMap<U> cast() const {
    FeatureMap<U> out(width_, height_, channels_);
    std::copy(data_.begin(), data_.end(), out.data().begin());
    return out;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

/// Bilinear read at sub-pixel (u, v) written into `out` (length C).
/// Coordinates are clamped to [0, W-1] x [0, H-1]. The weighted sum runs in
/// double regardless of T, in the fixed order
///   (1-wy) * ((1-wx) f00 + wx f10) + wy * ((1-wx) f01 + wx f11).
template <Real T>
void bilinear_sample_into(const FeatureMap<T>& f, double u, double v,
                          std::span<double> out) noexcept {
  const double max_u = static_cast<double>(f.width() - 1);
  const double max_v = static_cast<double>(f.height() - 1);
  // NaN coordinates clamp to the origin.
  u = (u >= 0.0) ? std::min(u, max_u) : 0.0;
  v = (v >= 0.0) ? std::min(v, max_v) : 0.0;
  const auto x0 = static_cast<std::size_t>(u);
  const auto y0 = static_cast<std::size_t>(v);
  const std::size_t x1 = std::min(x0 + 1, f.width() - 1);
  const std::size_t y1 = std::min(y0 + 1, f.height() - 1);
  const double wx = u - static_cast<double>(x0);
  const double wy = v - static_cast<double>(y0);
  const auto p00 = f.pixel(x0, y0);
  const auto p10 = f.pixel(x1, y0);
  const auto p01 = f.pixel(x0, y1);
  const auto p11 = f.pixel(x1, y1);
  for (std::size_t c = 0; c < f.channels(); ++c) {
    const double top = (1.0 - wx) * static_cast<double>(p00[c]) +
                       wx * static_cast<double>(p10[c]);
    const double bottom = (1.0 - wx) * static_cast<double>(p01[c]) +
                          wx * static_cast<double>(p11[c]);
    out[c] = (1.0 - wy) * top + wy * bottom;
  }
}

/// Bilinear sampling of many coordinates; returns len(coords) x C in double.
template <Real T>
Matrix<double> bilinear_sample(const FeatureMap<T>& f,
                               std::span<const Pixel> coords) {
  Matrix<double> out(coords.size(), f.channels());
  for (std::size_t i = 0; i < coords.size(); ++i)
    bilinear_sample_into(f, coords[i].u, coords[i].v, out.row(i));
  return out;
}

/// Source coordinate of output index `i` under the align-corners convention.
inline double align_corners_source(std::size_t i, std::size_t src_extent,
                                   std::size_t dst_extent) noexcept {
  if (dst_extent <= 1 || src_extent <= 1) return 0.0;
  return static_cast<double>(i) * static_cast<double>(src_extent - 1) /
         static_cast<double>(dst_extent - 1);
}

/// Align-corners bilinear upsampling to (target_w, target_h). Output corners
/// coincide with input corners, so every source grid point that lands on an
/// output grid point is reproduced exactly.
template <Real T>
FeatureMap<T> bilinear_upsample(const FeatureMap<T>& f, std::size_t target_w,
                                std::size_t target_h) {
  if (target_w < f.width() || target_h < f.height())
    throw ArgumentError("upsample target " + std::to_string(target_w) + "x" +
                        std::to_string(target_h) + " is smaller than source " +
                        std::to_string(f.width()) + "x" +
                        std::to_string(f.height()));
  FeatureMap<T> out(target_w, target_h, f.channels());
  std::vector<double> px(f.channels());
  for (std::size_t y = 0; y < target_h; ++y) {
    const double sv = align_corners_source(y, f.height(), target_h);
    for (std::size_t x = 0; x < target_w; ++x) {
      const double su = align_corners_source(x, f.width(), target_w);
      bilinear_sample_into(f, su, sv, px);
      for (std::size_t c = 0; c < f.channels(); ++c)
        out.at(x, y, c) = static_cast<T>(px[c]);
    }
  }
  return out;
}

/// Throws NumericError naming `stage` if any entry is NaN or infinite.
template <typename T>
void require_finite(std::span<T> values, const std::string& stage) {
  for (const auto v : values)
    if (!std::isfinite(v))
      throw NumericError("non-finite value in " + stage);
}

}  // namespace voxfuse

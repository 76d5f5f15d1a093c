// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// LiDAR-to-pixel projection. A point P in the LiDAR frame maps to
//
//   z_c * [u/h, v/h, 1]^T = K [R | T] [P; 1]
//
// i.e. perspective division first, then the down-sampling scale h multiplies
// the pixel coordinates. Two realizations of K [R | T] are supported: a
// pinhole CalibrationMatrix and the KITTI chain P2 * R0_rect * Tr_velo_to_cam.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "voxfuse/errors.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/tensor.hpp"

namespace voxfuse {

struct ImageSize {
  std::size_t width = 0;
  std::size_t height = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Pinhole intrinsics plus LiDAR-to-camera extrinsics and a pixel scale.
struct CalibrationMatrix {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;
  Mat3 rotation = identity3();
  Vec3 translation{0.0, 0.0, 0.0};
  double scale = 1.0;

  /// Throws ArgumentError unless R is orthonormal (1e-6) and fx, fy, h > 0.
  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
      throw ArgumentError("focal lengths must be positive");
    if (!(scale > 0.0)) throw ArgumentError("projection scale must be positive");
    const Mat3 rtr = matmul(transpose(rotation), rotation);
    const Mat3 eye = identity3();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (std::abs(rtr[i][j] - eye[i][j]) > 1e-6)
          throw ArgumentError("rotation is not orthonormal");
  }

  Mat3 intrinsics() const {
    return {{{fx, skew, cx}, {0.0, fy, cy}, {0.0, 0.0, 1.0}}};
  }

  /// K [R | T] as a 3x4 matrix.
  Mat34 projection_matrix() const {
    const Mat3 k = intrinsics();
    Mat34 rt{};
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) rt[i][j] = rotation[i][j];
      rt[i][3] = translation[i];
    }
    Mat34 out{};
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t m = 0; m < 3; ++m) out[i][j] += k[i][m] * rt[m][j];
    return out;
  }
};

/// The three matrices of a KITTI calib file that map velodyne to image 2.
struct KittiCalibration {
  Mat34 p2{};
  Mat3 r0_rect = identity3();
  Mat34 tr_velo_to_cam{};

  /// P2 * R0_rect(4x4) * Tr_velo_to_cam(4x4), a 3x4 matrix.
  Mat34 composite() const {
    Mat34 out = matmul(p2, matmul(homogeneous(r0_rect),
                                  homogeneous(tr_velo_to_cam)));
    for (const auto& row : out)
      for (double v : row)
        if (!std::isfinite(v))
          throw NumericError("non-finite KITTI composite projection");
    return out;
  }

  friend bool operator==(const KittiCalibration&,
                         const KittiCalibration&) = default;
};

/// Projected coordinates for N points. Points behind the camera or outside
/// the image keep their computed coordinates but are flagged invalid.
struct Projection {
  std::vector<Pixel> pixels;
  std::vector<double> depths;
  std::vector<std::uint8_t> valid;

  std::size_t size() const noexcept { return pixels.size(); }
  std::size_t valid_count() const noexcept {
    std::size_t n = 0;
    for (auto v : valid) n += v;
    return n;
  }
};

/// Projects through a 3x4 matrix with post-division pixel scale `scale`.
/// valid[i] holds iff z_c > 0 and 0 <= u < W and 0 <= v < H.
inline Projection project_points(std::span<const Vec3> points,
                                 const Mat34& projection, double scale,
                                 ImageSize image) {
  Projection out;
  out.pixels.resize(points.size());
  out.depths.resize(points.size());
  out.valid.resize(points.size());
  const double w = static_cast<double>(image.width);
  const double h = static_cast<double>(image.height);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 q = mat_vec(projection, points[i]);
    const double z = q[2];
    const double u = scale * (q[0] / z);
    const double v = scale * (q[1] / z);
    out.pixels[i] = {u, v};
    out.depths[i] = z;
    out.valid[i] = z > 0.0 && u >= 0.0 && u < w && v >= 0.0 && v < h;
  }
  return out;
}

inline Projection project_points(std::span<const Vec3> points,
                                 const CalibrationMatrix& calib,
                                 ImageSize image) {
  return project_points(points, calib.projection_matrix(), calib.scale, image);
}

inline Projection project_points(std::span<const Vec3> points,
                                 const KittiCalibration& calib,
                                 ImageSize image, double scale = 1.0) {
  return project_points(points, calib.composite(), scale, image);
}

/// First three columns of an M x (3+F) point matrix.
template <Real T>
std::vector<Vec3> xyz_of(const Matrix<T>& points) {
  if (points.cols() < 3 && !points.empty())
    throw ArgumentError("point matrix needs at least 3 columns");
  std::vector<Vec3> out(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i)
    out[i] = {static_cast<double>(points(i, 0)),
              static_cast<double>(points(i, 1)),
              static_cast<double>(points(i, 2))};
  return out;
}

// Global point-cloud augmentations whose effect must be undone before
// projecting into the (unaugmented) camera image.

/// Mirror about the x-z plane: y -> -y.
struct FlipY {
  friend bool operator==(const FlipY&, const FlipY&) = default;
};
/// Rotation about the LiDAR z axis.
struct RotateZ {
  double radians = 0.0;
  friend bool operator==(const RotateZ&, const RotateZ&) = default;
};
/// Uniform scaling about the origin.
struct UniformScale {
  double factor = 1.0;
  friend bool operator==(const UniformScale&, const UniformScale&) = default;
};

using Augmentation = std::variant<FlipY, RotateZ, UniformScale>;

/// Transforms in the order they were applied to the cloud.
struct AugmentationRecord {
  std::vector<Augmentation> transforms;

  void validate() const {
    for (const auto& t : transforms)
      if (const auto* s = std::get_if<UniformScale>(&t); s && !(s->factor > 0.0))
        throw ArgumentError("augmentation scale factor must be positive");
  }
};

namespace detail {

inline Vec3 forward(const Augmentation& a, const Vec3& p) {
  return std::visit(
      [&](const auto& t) -> Vec3 {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::same_as<T, FlipY>)
          return {p[0], -p[1], p[2]};
        else if constexpr (std::same_as<T, RotateZ>)
          return mat_vec(rotation_z(t.radians), p);
        else
          return t.factor * p;
      },
      a);
}

inline Vec3 inverse(const Augmentation& a, const Vec3& p) {
  return std::visit(
      [&](const auto& t) -> Vec3 {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::same_as<T, FlipY>)
          return {p[0], -p[1], p[2]};
        else if constexpr (std::same_as<T, RotateZ>)
          return mat_vec(rotation_z(-t.radians), p);
        else
          return (1.0 / t.factor) * p;
      },
      a);
}

}  // namespace detail

/// Applies the record's transforms in order.
inline std::vector<Vec3> apply_augmentation(std::span<const Vec3> points,
                                            const AugmentationRecord& record) {
  record.validate();
  std::vector<Vec3> out(points.begin(), points.end());
  for (const auto& t : record.transforms)
    for (auto& p : out) p = detail::forward(t, p);
  return out;
}

/// Undoes the record: inverse transforms, last applied first.
inline std::vector<Vec3> invert_augmentation(std::span<const Vec3> points,
                                             const AugmentationRecord& record) {
  record.validate();
  std::vector<Vec3> out(points.begin(), points.end());
  for (auto it = record.transforms.rbegin(); it != record.transforms.rend();
       ++it)
    for (auto& p : out) p = detail::inverse(*it, p);
  return out;
}

}  // namespace voxfuse

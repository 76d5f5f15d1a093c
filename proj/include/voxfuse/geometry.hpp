// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace voxfuse {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;
using Mat34 = std::array<std::array<double, 4>, 3>;
using Mat4 = std::array<std::array<double, 4>, 4>;

inline constexpr Mat3 identity3() {
  return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
}

inline constexpr Mat4 identity4() {
  return {{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}};
}

inline constexpr Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline constexpr Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline constexpr Vec3 operator*(double s, const Vec3& a) {
  return {s * a[0], s * a[1], s * a[2]};
}
inline constexpr double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline constexpr Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline constexpr Mat3 transpose(const Mat3& a) {
  Mat3 out{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) out[i][j] = a[j][i];
  return out;
}

inline constexpr Vec3 mat_vec(const Mat3& m, const Vec3& p) {
  return {m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
          m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
          m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2]};
}

/// M * [p; 1].
inline constexpr Vec3 mat_vec(const Mat34& m, const Vec3& p) {
  return {m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3],
          m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3],
          m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3]};
}

/// Embeds a 3x4 [R|t] as a homogeneous 4x4.
inline constexpr Mat4 homogeneous(const Mat34& m) {
  Mat4 out = identity4();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) out[i][j] = m[i][j];
  return out;
}

inline constexpr Mat4 homogeneous(const Mat3& m) {
  Mat4 out = identity4();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) out[i][j] = m[i][j];
  return out;
}

inline constexpr Mat34 matmul(const Mat34& a, const Mat4& b) {
  Mat34 out{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 4; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline constexpr Mat4 matmul(const Mat4& a, const Mat4& b) {
  Mat4 out{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 4; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

/// Rotation about +z by `radians` (counter-clockwise seen from above).
inline Mat3 rotation_z(double radians) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

}  // namespace voxfuse

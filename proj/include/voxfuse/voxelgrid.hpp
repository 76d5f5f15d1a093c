// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Sparse voxel tensors over a regular grid.
//
// Index to world follows the corner convention
//
//   world = (index * stride) * voxel_size + range_min
//
// with no half-voxel offset. Most detection codebases use voxel centers
// instead; set VoxelGridSpec::voxel_center_offset to get (index * stride + 0.5)
// * voxel_size + range_min for cross-checking against them.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "voxfuse/errors.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/npy.hpp"
#include "voxfuse/tensor.hpp"
#include "voxfuse/text.hpp"

namespace voxfuse {

using Index3 = std::array<std::int32_t, 3>;

inline Index3 operator+(const Index3& a, const Index3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

struct VoxelGridSpec {
  Vec3 voxel_size{0.05, 0.05, 0.1};
  Vec3 range_min{0.0, -40.0, -3.0};
  Vec3 range_max{70.4, 40.0, 1.0};
  int stride = 1;
  bool voxel_center_offset = false;

  void validate() const {
    for (std::size_t a = 0; a < 3; ++a) {
      if (!(voxel_size[a] > 0.0))
        throw ArgumentError("voxel size components must be positive");
      if (!(range_max[a] > range_min[a]))
        throw ArgumentError("point-cloud range max must exceed min per axis");
    }
    if (stride < 1) throw ArgumentError("voxel stride must be >= 1");
    for (auto e : extents())
      if (e < 1) throw ArgumentError("grid has an empty axis");
  }

  /// floor((max - min) / voxel_size) per axis, at stride 1.
  std::array<std::int64_t, 3> extents() const {
    std::array<std::int64_t, 3> e{};
    for (std::size_t a = 0; a < 3; ++a)
      e[a] = static_cast<std::int64_t>(
          std::floor((range_max[a] - range_min[a]) / voxel_size[a]));
    return e;
  }

  /// Grid extents at this spec's stride: ceil(extents / stride).
  std::array<std::int64_t, 3> strided_extents() const {
    auto e = extents();
    for (auto& v : e) v = (v + stride - 1) / stride;
    return e;
  }

  bool in_grid(const Index3& idx) const {
    const auto e = strided_extents();
    for (std::size_t a = 0; a < 3; ++a)
      if (idx[a] < 0 || idx[a] >= e[a]) return false;
    return true;
  }

  /// World coordinate of an index along one axis.
  double axis_to_world(std::size_t axis, std::int64_t i) const {
    const double s = static_cast<double>(i * stride);
    return (voxel_center_offset ? s + 0.5 : s) * voxel_size[axis] +
           range_min[axis];
  }

  Vec3 to_world(const Index3& idx) const {
    return {axis_to_world(0, idx[0]), axis_to_world(1, idx[1]),
            axis_to_world(2, idx[2])};
  }

  /// Largest index whose corner (at stride) is <= p along the axis; the exact
  /// inverse of axis_to_world on corners and floor semantics on boundaries.
  std::int64_t world_to_axis(std::size_t axis, double p) const {
    const double cell = voxel_size[axis] * stride;
    double q = (p - range_min[axis]) / cell;
    if (voxel_center_offset) q -= 0.5 / stride;
    auto i = static_cast<std::int64_t>(std::floor(q));
    while (axis_to_world(axis, i + 1) <= p) ++i;
    while (axis_to_world(axis, i) > p) --i;
    return i;
  }

  Index3 to_index(const Vec3& p) const {
    return {static_cast<std::int32_t>(world_to_axis(0, p[0])),
            static_cast<std::int32_t>(world_to_axis(1, p[1])),
            static_cast<std::int32_t>(world_to_axis(2, p[2]))};
  }

  /// Half-open membership in the point-cloud range.
  bool contains(const Vec3& p) const {
    for (std::size_t a = 0; a < 3; ++a)
      if (!(p[a] >= range_min[a] && p[a] < range_max[a])) return false;
    return true;
  }

  friend bool operator==(const VoxelGridSpec&, const VoxelGridSpec&) = default;
};

/// N occupied voxels: unique index triples and an N x C feature block.
class SparseVoxelTensor {
 public:
  SparseVoxelTensor() = default;

  SparseVoxelTensor(VoxelGridSpec spec, std::vector<Index3> indices,
                    Matrix<double> features)
      : spec_(std::move(spec)),
        indices_(std::move(indices)),
        features_(std::move(features)) {
    if (features_.rows() != indices_.size())
      throw ArgumentError("sparse tensor has " +
                          std::to_string(indices_.size()) + " indices but " +
                          std::to_string(features_.rows()) + " feature rows");
    extents_ = spec_.strided_extents();
    rows_.reserve(indices_.size());
    for (std::size_t r = 0; r < indices_.size(); ++r) {
      if (!spec_.in_grid(indices_[r]))
        throw ArgumentError("voxel index outside grid extents");
      if (!rows_.emplace(key(indices_[r]), static_cast<std::uint32_t>(r))
               .second)
        throw ArgumentError("duplicate voxel index in sparse tensor");
    }
  }

  const VoxelGridSpec& spec() const noexcept { return spec_; }
  const std::vector<Index3>& indices() const noexcept { return indices_; }
  const Matrix<double>& features() const noexcept { return features_; }
  std::size_t size() const noexcept { return indices_.size(); }
  std::size_t channels() const noexcept { return features_.cols(); }
  bool empty() const noexcept { return indices_.empty(); }

  /// Row holding `idx`, if occupied.
  std::optional<std::size_t> lookup(const Index3& idx) const {
    for (std::size_t a = 0; a < 3; ++a)
      if (idx[a] < 0 || idx[a] >= extents_[a]) return std::nullopt;
    auto it = rows_.find(key(idx));
    if (it == rows_.end()) return std::nullopt;
    return it->second;
  }

  /// Same voxels carrying different features.
  SparseVoxelTensor with_features(Matrix<double> features) const {
    return SparseVoxelTensor(spec_, indices_, std::move(features));
  }

 private:
  std::uint64_t key(const Index3& idx) const noexcept {
    return (static_cast<std::uint64_t>(idx[0]) *
                static_cast<std::uint64_t>(extents_[1]) +
            static_cast<std::uint64_t>(idx[1])) *
               static_cast<std::uint64_t>(extents_[2]) +
           static_cast<std::uint64_t>(idx[2]);
  }

  VoxelGridSpec spec_;
  std::vector<Index3> indices_;
  Matrix<double> features_;
  std::array<std::int64_t, 3> extents_{1, 1, 1};
  std::unordered_map<std::uint64_t, std::uint32_t> rows_;
};

/// World coordinates of every voxel (corner convention unless the spec asks
/// for centers).
inline std::vector<Vec3> indices_to_world(const SparseVoxelTensor& t) {
  std::vector<Vec3> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = t.spec().to_world(t.indices()[i]);
  return out;
}

inline std::vector<Index3> world_to_indices(const VoxelGridSpec& spec,
                                            std::span<const Vec3> points) {
  std::vector<Index3> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    out[i] = spec.to_index(points[i]);
  return out;
}

/// Mean-pooling voxelization of an M x (3+F) point matrix.
///
/// Points outside the half-open range are dropped. Each occupied voxel keeps
/// the mean of all 3+F columns over its first `max_points_per_voxel` points in
/// input order. Output indices are sorted lexicographically.
inline SparseVoxelTensor voxelize(const Matrix<double>& points,
                                  const VoxelGridSpec& spec,
                                  std::size_t max_points_per_voxel) {
  spec.validate();
  if (max_points_per_voxel < 1)
    throw ArgumentError("max_points_per_voxel must be >= 1");
  if (!points.empty() && points.cols() < 3)
    throw ArgumentError("points need at least 3 columns");
  const std::size_t cols = points.cols();

  struct Cell {
    Index3 index;
    std::size_t count = 0;
    std::vector<double> sum;
  };
  const auto ext = spec.strided_extents();
  std::unordered_map<std::uint64_t, std::size_t> slot;
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto row = points.row(i);
    const Vec3 p{row[0], row[1], row[2]};
    if (!spec.contains(p)) continue;
    const Index3 idx = spec.to_index(p);
    if (!spec.in_grid(idx)) continue;
    const std::uint64_t k =
        (static_cast<std::uint64_t>(idx[0]) * ext[1] + idx[1]) * ext[2] +
        idx[2];
    auto [it, inserted] = slot.try_emplace(k, cells.size());
    if (inserted) cells.push_back({idx, 0, std::vector<double>(cols, 0.0)});
    Cell& cell = cells[it->second];
    if (cell.count >= max_points_per_voxel) continue;
    ++cell.count;
    for (std::size_t c = 0; c < cols; ++c) cell.sum[c] += row[c];
  }
  std::sort(cells.begin(), cells.end(),
            [](const Cell& a, const Cell& b) { return a.index < b.index; });
  std::vector<Index3> indices(cells.size());
  Matrix<double> features(cells.size(), cols);
  for (std::size_t r = 0; r < cells.size(); ++r) {
    indices[r] = cells[r].index;
    const double n = static_cast<double>(cells[r].count);
    for (std::size_t c = 0; c < cols; ++c) features(r, c) = cells[r].sum[c] / n;
  }
  return SparseVoxelTensor(spec, std::move(indices), std::move(features));
}

/// All offsets of a k^3 cube centered on the origin, lexicographic in
/// (dx, dy, dz), center included.
inline std::vector<Index3> kernel_offsets(int k_s) {
  if (k_s < 1 || k_s % 2 == 0)
    throw ArgumentError("kernel size must be odd and >= 1, got " +
                        std::to_string(k_s));
  const int r = (k_s - 1) / 2;
  std::vector<Index3> out;
  out.reserve(static_cast<std::size_t>(k_s) * k_s * k_s);
  for (int dx = -r; dx <= r; ++dx)
    for (int dy = -r; dy <= r; ++dy)
      for (int dz = -r; dz <= r; ++dz) out.push_back({dx, dy, dz});
  return out;
}

/// kernel_offsets minus the center: k^3 - 1 neighbor displacements.
inline std::vector<Index3> neighbor_offsets(int k_s) {
  auto all = kernel_offsets(k_s);
  std::erase(all, Index3{0, 0, 0});
  return all;
}

// Serialization: <stem>.idx.npy (N x 3 float64), <stem>.feat.npy (N x C
// float32) and <stem>.spec.txt holding one line describing the grid.

inline std::string serialize_spec(const VoxelGridSpec& s) {
  auto v3 = [](const Vec3& v) {
    return text::format_double(v[0]) + "," + text::format_double(v[1]) + "," +
           text::format_double(v[2]);
  };
  return "voxel_size=" + v3(s.voxel_size) + " range_min=" + v3(s.range_min) +
         " range_max=" + v3(s.range_max) +
         " stride=" + std::to_string(s.stride) +
         " voxel_center_offset=" + (s.voxel_center_offset ? "1" : "0") + "\n";
}

inline VoxelGridSpec parse_spec(std::string_view line) {
  VoxelGridSpec s;
  auto v3 = [](std::string_view v, const std::string& what) {
    const auto parts = text::split(v, ',');
    if (parts.size() != 3) throw ParseError(what + " needs 3 components");
    return Vec3{text::parse_double(parts[0], what),
                text::parse_double(parts[1], what),
                text::parse_double(parts[2], what)};
  };
  for (auto tok : text::split_ws(text::trim(line))) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("grid spec token without '='");
    const auto k = tok.substr(0, eq);
    const auto v = tok.substr(eq + 1);
    if (k == "voxel_size")
      s.voxel_size = v3(v, "voxel_size");
    else if (k == "range_min")
      s.range_min = v3(v, "range_min");
    else if (k == "range_max")
      s.range_max = v3(v, "range_max");
    else if (k == "stride")
      s.stride = static_cast<int>(text::parse_int(v, "stride"));
    else if (k == "voxel_center_offset")
      s.voxel_center_offset = text::parse_int(v, "voxel_center_offset") != 0;
    else
      throw ParseError("unknown grid spec key " + std::string(k));
  }
  s.validate();
  return s;
}

inline void write_sparse(const SparseVoxelTensor& t,
                         const std::filesystem::path& stem) {
  Matrix<double> idx(t.size(), 3);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t a = 0; a < 3; ++a) idx(i, a) = t.indices()[i][a];
  const std::string base = stem.string();
  npy::write(idx, base + ".idx.npy");
  npy::write(t.features().cast<float>(), base + ".feat.npy");
  std::ofstream out(base + ".spec.txt", std::ios::trunc);
  if (!out) throw IoError("cannot open " + base + ".spec.txt for writing");
  out << serialize_spec(t.spec());
}

inline SparseVoxelTensor read_sparse(const std::filesystem::path& stem) {
  const std::string base = stem.string();
  const auto idx = npy::read_matrix<double>(base + ".idx.npy");
  auto feat = npy::read_matrix<double>(base + ".feat.npy");
  std::ifstream in(base + ".spec.txt");
  if (!in) throw IoError("cannot open " + base + ".spec.txt");
  std::string line;
  std::getline(in, line);
  if (idx.rows() != 0 && idx.cols() != 3)
    throw FormatError(base + ".idx.npy must be N x 3");
  std::vector<Index3> indices(idx.rows());
  for (std::size_t i = 0; i < idx.rows(); ++i)
    for (std::size_t a = 0; a < 3; ++a)
      indices[i][a] = static_cast<std::int32_t>(idx(i, a));
  return SparseVoxelTensor(parse_spec(line), std::move(indices),
                           std::move(feat));
}

}  // namespace voxfuse

// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Sparsity statistics: how many image pixels receive a LiDAR return, and how
// many returns fall inside each ground-truth box.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "voxfuse/calib.hpp"
#include "voxfuse/geometry.hpp"

namespace voxfuse {

struct DistanceBin {
  double min_range = 0.0;
  double max_range = 0.0;  // +inf for the last bin
  std::size_t points = 0;  // valid projections from this range
  std::size_t hit_pixels = 0;
  double occupancy_rate = 0.0;
};

struct OccupancyReport {
  std::size_t total_pixels = 0;
  std::size_t hit_pixels = 0;
  std::size_t projected_points = 0;
  double occupancy_rate = 0.0;
  std::array<DistanceBin, 3> bins{};
};

inline constexpr std::array<double, 4> kDistanceEdges = {
    0.0, 20.0, 40.0, std::numeric_limits<double>::infinity()};

/// A pixel is hit iff at least one valid projection floors into it. Bins use
/// the Euclidean range of the source point from the LiDAR origin; each bin's
/// rate is its own hit pixels over all image pixels.
inline OccupancyReport occupancy(std::span<const Vec3> points,
                                 const Mat34& projection, double scale,
                                 ImageSize image) {
  OccupancyReport r;
  r.total_pixels = image.width * image.height;
  const Projection proj = project_points(points, projection, scale, image);
  std::vector<std::uint8_t> any(r.total_pixels, 0);
  std::array<std::vector<std::uint8_t>, 3> per_bin;
  for (auto& b : per_bin) b.assign(r.total_pixels, 0);
  for (std::size_t b = 0; b < 3; ++b) {
    r.bins[b].min_range = kDistanceEdges[b];
    r.bins[b].max_range = kDistanceEdges[b + 1];
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!proj.valid[i]) continue;
    const auto x = static_cast<std::size_t>(std::floor(proj.pixels[i].u));
    const auto y = static_cast<std::size_t>(std::floor(proj.pixels[i].v));
    const std::size_t pix = y * image.width + x;
    ++r.projected_points;
    if (!any[pix]) {
      any[pix] = 1;
      ++r.hit_pixels;
    }
    const double range = norm(points[i]);
    std::size_t b = 0;
    while (b < 2 && range >= kDistanceEdges[b + 1]) ++b;
    ++r.bins[b].points;
    if (!per_bin[b][pix]) {
      per_bin[b][pix] = 1;
      ++r.bins[b].hit_pixels;
    }
  }
  const double total = static_cast<double>(std::max<std::size_t>(r.total_pixels, 1));
  r.occupancy_rate = static_cast<double>(r.hit_pixels) / total;
  for (auto& b : r.bins)
    b.occupancy_rate = static_cast<double>(b.hit_pixels) / total;
  return r;
}

inline OccupancyReport occupancy(std::span<const Vec3> points,
                                 const KittiCalibration& calib, ImageSize image,
                                 double scale = 1.0) {
  return occupancy(points, calib.composite(), scale, image);
}

inline OccupancyReport occupancy(std::span<const Vec3> points,
                                 const CalibrationMatrix& calib,
                                 ImageSize image) {
  return occupancy(points, calib.projection_matrix(), calib.scale, image);
}

inline void print_report(const OccupancyReport& r, std::ostream& os) {
  os << "total_pixels: " << r.total_pixels << "\n"
     << "hit_pixels: " << r.hit_pixels << "\n"
     << "projected_points: " << r.projected_points << "\n"
     << "occupancy_rate: " << r.occupancy_rate << "\n";
  for (const auto& b : r.bins) {
    const std::string name =
        "bin_" + std::to_string(static_cast<int>(b.min_range)) + "_" +
        (std::isinf(b.max_range) ? std::string("inf")
                                 : std::to_string(static_cast<int>(b.max_range)));
    os << name << ".points: " << b.points << "\n"
       << name << ".hit_pixels: " << b.hit_pixels << "\n"
       << name << ".occupancy_rate: " << b.occupancy_rate << "\n";
  }
}

enum class Difficulty { kEasy, kModerate, kHard };

inline std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kModerate: return "moderate";
    case Difficulty::kHard: return "hard";
  }
  return "unknown";
}

/// Box on the ground: center, full extents (length along the heading, width,
/// height) and heading angle about +z.
struct OrientedBox {
  Vec3 center{0, 0, 0};
  Vec3 size{1, 1, 1};
  double yaw = 0.0;
  friend bool operator==(const OrientedBox&, const OrientedBox&) = default;
};

/// Point in the box frame: inverse-yaw rotation about the center.
inline Vec3 to_box_frame(const OrientedBox& box, const Vec3& p) {
  return mat_vec(rotation_z(-box.yaw), p - box.center);
}

/// Half-open containment: -s/2 <= local < s/2 on every axis.
inline bool contains(const OrientedBox& box, const Vec3& p) {
  const Vec3 local = to_box_frame(box, p);
  for (std::size_t a = 0; a < 3; ++a) {
    const double half = 0.5 * box.size[a];
    if (!(local[a] >= -half && local[a] < half)) return false;
  }
  return true;
}

struct BoxPointHistogram {
  std::vector<std::size_t> counts;
  std::vector<Difficulty> difficulties;

  /// Fraction of boxes (optionally of one difficulty) holding fewer than
  /// `threshold` points. Zero boxes gives 0.
  double fraction_below(std::size_t threshold) const {
    return fraction_below(threshold, nullptr);
  }
  double fraction_below(std::size_t threshold, Difficulty d) const {
    return fraction_below(threshold, &d);
  }

 private:
  double fraction_below(std::size_t threshold, const Difficulty* d) const {
    std::size_t total = 0, below = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (d && difficulties[i] != *d) continue;
      ++total;
      below += counts[i] < threshold;
    }
    return total ? static_cast<double>(below) / static_cast<double>(total)
                 : 0.0;
  }
};

inline BoxPointHistogram box_point_counts(std::span<const Vec3> points,
                                          std::span<const OrientedBox> boxes,
                                          std::span<const Difficulty> labels) {
  if (boxes.size() != labels.size())
    throw ArgumentError("one difficulty label per box is required");
  for (const auto& b : boxes)
    for (double s : b.size)
      if (!(s > 0.0)) throw ArgumentError("box sizes must be positive");
  BoxPointHistogram h;
  h.counts.assign(boxes.size(), 0);
  h.difficulties.assign(labels.begin(), labels.end());
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    // Cheap radius reject before the rotation.
    const double radius = 0.5 * norm(boxes[b].size);
    for (const auto& p : points) {
      const Vec3 d = p - boxes[b].center;
      if (dot(d, d) > radius * radius) continue;
      h.counts[b] += contains(boxes[b], p);
    }
  }
  return h;
}

/// CSV: threshold,all,easy,moderate,hard (fractions below threshold).
inline void write_histogram_csv(const BoxPointHistogram& h,
                                std::span<const std::size_t> thresholds,
                                std::ostream& os) {
  os << "threshold,all,easy,moderate,hard\n";
  for (auto t : thresholds)
    os << t << "," << h.fraction_below(t) << ","
       << h.fraction_below(t, Difficulty::kEasy) << ","
       << h.fraction_below(t, Difficulty::kModerate) << ","
       << h.fraction_below(t, Difficulty::kHard) << "\n";
}

}  // namespace voxfuse

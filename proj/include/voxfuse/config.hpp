// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// FusionConfig and its text form: `key = value` lines (or `key: value`),
// dotted keys, optional `[section]` headers that prefix the keys below them,
// `#` comments.
//
//   seed = 7
//   [fbfusion]
//   threshold = 0.5       # same as fbfusion.threshold = 0.5

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <string>
#include <string_view>

#include "voxfuse/errors.hpp"
#include "voxfuse/fbfusion.hpp"
#include "voxfuse/p2fusion.hpp"
#include "voxfuse/scenegen.hpp"
#include "voxfuse/text.hpp"
#include "voxfuse/voxelgrid.hpp"

namespace voxfuse {

struct FusionConfig {
  VoxelGridSpec grid;  // 0.05 x 0.05 x 0.1 m voxels over the KITTI range
  std::size_t max_points_per_voxel = 5;
  int stage = 1;       // fusion after encoder stage s: stride * 2^(s-1)
  std::size_t channels = 16;
  int patch_k = 9;     // [-1,0,1]^2
  Combiner combiner = Combiner::kAdd;
  std::size_t mlp_depth = 1;
  std::size_t chunk = 1024;
  double projection_scale = 1.0;
  int k_s = 3;
  double threshold = 0.5;
  ScoreLayout score_layout = ScoreLayout::kExpandThenFore;
  std::uint64_t seed = 0;
  SceneSpec scene;

  /// Grid actually voxelized: the configured stride times the stage factor.
  VoxelGridSpec stage_grid() const {
    VoxelGridSpec g = grid;
    g.stride = grid.stride * (1 << (stage - 1));
    return g;
  }

  void validate() const {
    grid.validate();
    if (stage < 1 || stage > 4) throw ArgumentError("stage must be 1..4");
    if (channels < 1) throw ArgumentError("channels must be >= 1");
    PatchPattern::from_count(patch_k);
    if (mlp_depth < 1) throw ArgumentError("mlp_depth must be >= 1");
    if (max_points_per_voxel < 1)
      throw ArgumentError("max_points_per_voxel must be >= 1");
    if (!(projection_scale > 0.0))
      throw ArgumentError("projection_scale must be positive");
    kernel_offsets(k_s);
    check_threshold(threshold);
    scene.validate();
  }

  /// Sets one dotted key; unknown keys and bad values throw ArgumentError.
  void set(std::string_view key, std::string_view value) {
    try {
      set_impl(key, text::trim(value));
    } catch (const ParseError& e) {
      throw ArgumentError("config " + std::string(key) + ": " + e.what());
    }
  }

 private:
  static bool parse_bool(std::string_view v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ParseError("expected a boolean, got '" + std::string(v) + "'");
  }

  static Vec3 parse_vec3(std::string_view v) {
    const auto p = text::split(v, ',');
    if (p.size() != 3) throw ParseError("expected x,y,z");
    return {text::parse_double(p[0], "x"), text::parse_double(p[1], "y"),
            text::parse_double(p[2], "z")};
  }

  static std::size_t parse_size(std::string_view v, const char* what) {
    return static_cast<std::size_t>(text::parse_u64(v, what));
  }

  void set_impl(std::string_view key, std::string_view v) {
    if (key == "seed") {
      seed = text::parse_u64(v, "seed");
      scene.seed = seed;
    } else if (key == "grid.voxel_size") {
      grid.voxel_size = parse_vec3(v);
    } else if (key == "grid.range") {
      const auto p = text::split(v, ',');
      if (p.size() != 6) throw ParseError("expected xmin,ymin,zmin,xmax,ymax,zmax");
      for (std::size_t a = 0; a < 3; ++a) {
        grid.range_min[a] = text::parse_double(p[a], "range");
        grid.range_max[a] = text::parse_double(p[a + 3], "range");
      }
    } else if (key == "grid.stride") {
      grid.stride = static_cast<int>(text::parse_int(v, "stride"));
    } else if (key == "grid.voxel_center_offset") {
      grid.voxel_center_offset = parse_bool(v);
    } else if (key == "grid.max_points_per_voxel") {
      max_points_per_voxel = parse_size(v, "max_points_per_voxel");
    } else if (key == "fusion.stage") {
      stage = static_cast<int>(text::parse_int(v, "stage"));
    } else if (key == "fusion.channels") {
      channels = parse_size(v, "channels");
    } else if (key == "fusion.patch_k") {
      patch_k = static_cast<int>(text::parse_int(v, "patch_k"));
    } else if (key == "fusion.combiner") {
      if (v == "add")
        combiner = Combiner::kAdd;
      else if (v == "concat")
        combiner = Combiner::kConcat;
      else
        throw ParseError("combiner must be add or concat");
    } else if (key == "fusion.mlp_depth") {
      mlp_depth = parse_size(v, "mlp_depth");
    } else if (key == "fusion.chunk") {
      chunk = parse_size(v, "chunk");
    } else if (key == "fusion.projection_scale") {
      projection_scale = text::parse_double(v, "projection_scale");
    } else if (key == "fbfusion.k_s") {
      k_s = static_cast<int>(text::parse_int(v, "k_s"));
    } else if (key == "fbfusion.threshold") {
      threshold = text::parse_double(v, "threshold");
    } else if (key == "fbfusion.score_layout") {
      if (v == "expand_first")
        score_layout = ScoreLayout::kExpandThenFore;
      else if (v == "fore_first")
        score_layout = ScoreLayout::kForeThenExpand;
      else
        throw ParseError("score_layout must be expand_first or fore_first");
    } else if (key == "scene.objects") {
      scene.objects = static_cast<int>(text::parse_int(v, "objects"));
    } else if (key == "scene.beams") {
      scene.lidar.beams = static_cast<int>(text::parse_int(v, "beams"));
    } else if (key == "scene.azimuth_resolution") {
      scene.lidar.azimuth_resolution_deg = text::parse_double(v, "azimuth");
    } else if (key == "scene.max_range") {
      scene.lidar.max_range = text::parse_double(v, "max_range");
    } else if (key == "scene.width") {
      scene.camera.width = parse_size(v, "width");
    } else if (key == "scene.height") {
      scene.camera.height = parse_size(v, "height");
    } else if (key == "scene.feature_bumps") {
      scene.feature_bumps = static_cast<int>(text::parse_int(v, "bumps"));
    } else if (key == "scene.feature_amplitude") {
      scene.feature_amplitude = text::parse_double(v, "amplitude");
    } else {
      throw ArgumentError("unknown config key '" + std::string(key) + "'");
    }
  }
};

/// Applies every line of a config text to `config`.
inline void apply_config_text(FusionConfig& config, std::string_view contents) {
  std::string section;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= contents.size()) {
    auto end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ArgumentError("config line " + std::to_string(line_no) +
                            ": unterminated section header");
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    auto sep = line.find('=');
    if (sep == std::string_view::npos) sep = line.find(':');
    if (sep == std::string_view::npos)
      throw ArgumentError("config line " + std::to_string(line_no) +
                          ": expected key = value");
    const std::string key(text::trim(line.substr(0, sep)));
    config.set(section.empty() ? key : section + "." + key,
               line.substr(sep + 1));
  }
}

inline FusionConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  const std::string contents{std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>()};
  FusionConfig c;
  apply_config_text(c, contents);
  return c;
}

}  // namespace voxfuse

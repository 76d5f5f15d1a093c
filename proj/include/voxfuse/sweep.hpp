// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Ablation sweeps over the importance threshold, the patch size and the
// fusion stage. One summary row per value.

#pragma once

#include <algorithm>
#include <chrono>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "voxfuse/pipeline.hpp"

namespace voxfuse {

enum class SweepParam { kThreshold, kPatch, kStage };

inline SweepParam parse_sweep_param(std::string_view name) {
  if (name == "T" || name == "threshold") return SweepParam::kThreshold;
  if (name == "k_off" || name == "patch_k") return SweepParam::kPatch;
  if (name == "stage") return SweepParam::kStage;
  throw ArgumentError("unknown sweep parameter '" + std::string(name) +
                      "' (use T, k_off or stage)");
}

inline std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::kThreshold: return "T";
    case SweepParam::kPatch: return "k_off";
    case SweepParam::kStage: return "stage";
  }
  return "?";
}

/// Default grids: T in {0.1..0.9}, K_off in {9, 16, 25, 36}, stage 1..4.
inline std::vector<double> default_sweep_values(SweepParam p) {
  switch (p) {
    case SweepParam::kThreshold:
      return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    case SweepParam::kPatch: return {9, 16, 25, 36};
    case SweepParam::kStage: return {1, 2, 3, 4};
  }
  return {};
}

struct SweepRow {
  SweepParam param = SweepParam::kThreshold;
  double value = 0.0;
  std::string patch;  // offset range of the square pattern, e.g. "-1:1"
  std::size_t voxels = 0;
  std::size_t alpha = 0;
  std::size_t beta = 0;
  std::size_t expanded = 0;
  std::size_t dense_foreground = 0;
  std::size_t output_voxels = 0;
  double time_ms = 0.0;
};

inline std::string patch_range(int k) {
  const auto pattern = PatchPattern::from_count(k);
  const auto& o = pattern.offsets();
  return std::to_string(o.front()[0]) + ":" + std::to_string(o.back()[0]);
}

inline FusionConfig with_value(FusionConfig c, SweepParam p, double v) {
  switch (p) {
    case SweepParam::kThreshold:
      c.threshold = v;
      break;
    case SweepParam::kPatch:
      if (v != std::floor(v)) throw ArgumentError("k_off values are integers");
      c.patch_k = static_cast<int>(v);
      break;
    case SweepParam::kStage:
      if (v != std::floor(v)) throw ArgumentError("stage values are integers");
      c.stage = static_cast<int>(v);
      break;
  }
  c.validate();
  return c;
}

inline SweepRow row_from(SweepParam p, double v, const FusionConfig& c,
                         const PipelineResult& r) {
  SweepRow row;
  row.param = p;
  row.value = v;
  row.patch = patch_range(c.patch_k);
  row.voxels = r.voxels.size();
  row.alpha = r.fore_back.split.alpha();
  row.beta = r.fore_back.split.beta();
  row.expanded = r.fore_back.expanded.size();
  row.dense_foreground = r.fore_back.dense_foreground;
  row.output_voxels = r.fore_back.output.size();
  row.time_ms = r.times.total_ms;
  return row;
}

inline std::vector<SweepRow> run_sweep(const SceneFiles& scene,
                                       const FusionConfig& base, SweepParam p,
                                       std::span<const double> values) {
  if (values.empty()) throw ArgumentError("sweep needs at least one value");
  std::vector<FusionConfig> configs;
  for (double v : values) configs.push_back(with_value(base, p, v));

  std::vector<SweepRow> rows;
  if (p == SweepParam::kThreshold) {
    // Everything before the split is independent of T.
    PipelineResult r = run_pipeline(scene, configs.front());
    const FusionModel model = model_for(scene, configs.front());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      r.fore_back = fb_fuse(r.fused,
                            {configs[i].k_s, configs[i].threshold,
                             configs[i].score_layout, configs[i].chunk},
                            model.scorer, model.fore_back);
      r.times.total_ms = detail::ms_since(t0);
      rows.push_back(row_from(p, values[i], configs[i], r));
    }
    return rows;
  }
  for (std::size_t i = 0; i < values.size(); ++i)
    rows.push_back(
        row_from(p, values[i], configs[i], run_pipeline(scene, configs[i])));
  return rows;
}

inline void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& os) {
  os << "param,value,patch,voxels,alpha,beta,expanded,dense_foreground,"
        "output_voxels,time_ms\n";
  for (const auto& r : rows)
    os << to_string(r.param) << "," << r.value << "," << r.patch << ","
       << r.voxels << "," << r.alpha << "," << r.beta << "," << r.expanded
       << "," << r.dense_foreground << "," << r.output_voxels << ","
       << r.time_ms << "\n";
}

}  // namespace voxfuse

// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end fusion: voxelize -> encode -> project -> point/patch fusion ->
// SAF -> foreground-background fusion. The CLI is a thin shell over these
// functions.

#pragma once

#include <chrono>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "voxfuse/calib.hpp"
#include "voxfuse/config.hpp"
#include "voxfuse/fbfusion.hpp"
#include "voxfuse/p2fusion.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/saf.hpp"
#include "voxfuse/scenegen.hpp"
#include "voxfuse/voxelgrid.hpp"

namespace voxfuse {

/// Stand-in for the first sparse-convolution stage: a seeded linear map from
/// mean point attributes to C channels. xyz is first normalized to [0, 1]
/// over the point-cloud range so that features stay O(1).
struct VoxelEncoder {
  Linear layer;
  Vec3 range_min{};
  Vec3 range_extent{1, 1, 1};

  static VoxelEncoder init(std::size_t in_dim, std::size_t channels,
                           const VoxelGridSpec& grid, std::uint64_t seed) {
    VoxelEncoder e;
    e.layer.weight = Matrix<double>(in_dim, channels);
    e.layer.bias.assign(channels, 0.0);
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (auto& v : e.layer.weight.data()) v = rng.uniform(-bound, bound);
    for (auto& v : e.layer.bias) v = rng.uniform(-bound, bound);
    e.range_min = grid.range_min;
    e.range_extent = grid.range_max - grid.range_min;
    return e;
  }

  Matrix<double> apply(const Matrix<double>& attributes) const {
    if (!attributes.empty() && attributes.cols() != layer.weight.rows())
      throw ArgumentError("voxel encoder expects " +
                          std::to_string(layer.weight.rows()) + " attributes");
    const std::size_t c = layer.weight.cols();
    Matrix<double> out(attributes.rows(), c);
    std::vector<double> x(layer.weight.rows());
    for (std::size_t i = 0; i < attributes.rows(); ++i) {
      const auto a = attributes.row(i);
      for (std::size_t j = 0; j < x.size(); ++j)
        x[j] = j < 3 ? (a[j] - range_min[j]) / range_extent[j] : a[j];
      auto o = out.row(i);
      std::copy(layer.bias.begin(), layer.bias.end(), o.begin());
      for (std::size_t j = 0; j < x.size(); ++j) {
        const auto w = layer.weight.row(j);
        for (std::size_t k = 0; k < c; ++k) o[k] += x[j] * w[k];
      }
    }
    return out;
  }
};

/// Every learned-looking parameter of the pipeline, derived from one seed.
struct FusionModel {
  VoxelEncoder encoder;
  SafParameters point_patch;  // SAF after patch-point fusion (K from config)
  SubmanifoldWeights scorer;
  SafParameters fore_back;    // SAF after foreground-background fusion, K = 1

  static FusionModel build(const FusionConfig& config, std::size_t in_dim,
                           std::size_t image_channels) {
    const std::size_t fused =
        config.combiner == Combiner::kAdd ? config.channels
                                          : image_channels + config.channels;
    SplitMix64 seeds(config.seed);
    FusionModel m;
    m.encoder = VoxelEncoder::init(in_dim, config.channels, config.grid,
                                   seeds.next());
    m.point_patch = SafParameters::init(
        PatchPattern::from_count(config.patch_k).size(), fused, seeds.next(),
        config.mlp_depth);
    m.scorer = SubmanifoldWeights::init(config.k_s, fused, seeds.next());
    m.fore_back = SafParameters::init(1, fused, seeds.next(), config.mlp_depth);
    return m;
  }
};

struct PointPatchResult {
  Projection projection;
  Matrix<double> point;   // F_IV
  Matrix<double> fusion;  // F_fusion
};

/// Voxel corners -> undo augmentation -> pixels -> point and patch fusion ->
/// SAF. `image` must already be at full camera resolution.
template <Real T>
PointPatchResult point_patch_fuse(const SparseVoxelTensor& voxels,
                                  const FeatureMap<T>& image,
                                  const Mat34& projection, double scale,
                                  const AugmentationRecord& augmentation,
                                  const PatchPattern& pattern,
                                  Combiner combiner,
                                  const SafParameters& saf,
                                  std::size_t chunk) {
  const auto world = indices_to_world(voxels);
  const auto original = invert_augmentation(world, augmentation);
  PointPatchResult r;
  r.projection = project_points(original, projection, scale,
                                {image.width(), image.height()});
  r.point = point_fusion(image, r.projection.pixels, voxels.features(),
                         combiner);
  const Matrix<double> patch = patch_fusion(
      image, r.projection.pixels, pattern, voxels.features(), combiner);
  r.fusion = saf_forward(patch, r.point, saf, {chunk, false}).fusion;
  return r;
}

struct StageTimes {
  double voxelize_ms = 0.0;
  double upsample_ms = 0.0;
  double point_patch_ms = 0.0;
  double fore_back_ms = 0.0;
  double total_ms = 0.0;
};

struct PipelineResult {
  SparseVoxelTensor voxels;   // encoded voxel features F_v
  PointPatchResult point_patch;
  SparseVoxelTensor fused;    // F_fusion on the voxel sites
  FbResult fore_back;
  StageTimes times;
};

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace detail

/// Fusion starting from an encoded voxel tensor and a quarter-resolution map.
inline PipelineResult fuse_voxels(const SparseVoxelTensor& voxels,
                                  const FeatureMap<float>& quarter_map,
                                  const KittiCalibration& calib,
                                  ImageSize image,
                                  const AugmentationRecord& augmentation,
                                  const FusionConfig& config,
                                  const FusionModel& model) {
  using clock = std::chrono::steady_clock;
  PipelineResult r;
  const auto t_total = clock::now();
  r.voxels = voxels;

  auto t0 = clock::now();
  const FeatureMap<float> full =
      bilinear_upsample(quarter_map, image.width, image.height);
  r.times.upsample_ms = detail::ms_since(t0);

  t0 = clock::now();
  r.point_patch = point_patch_fuse(
      voxels, full, calib.composite(), config.projection_scale, augmentation,
      PatchPattern::from_count(config.patch_k), config.combiner,
      model.point_patch, config.chunk);
  r.fused = voxels.with_features(r.point_patch.fusion);
  r.times.point_patch_ms = detail::ms_since(t0);

  t0 = clock::now();
  r.fore_back = fb_fuse(r.fused,
                        {config.k_s, config.threshold, config.score_layout,
                         config.chunk},
                        model.scorer, model.fore_back);
  r.times.fore_back_ms = detail::ms_since(t0);
  r.times.total_ms = detail::ms_since(t_total);
  return r;
}

/// Voxelizes the scene at the configured stage and encodes the voxels.
inline SparseVoxelTensor encode_scene(const SceneFiles& scene,
                                      const FusionConfig& config,
                                      const FusionModel& model) {
  const SparseVoxelTensor raw = voxelize(scene.points, config.stage_grid(),
                                         config.max_points_per_voxel);
  return raw.with_features(model.encoder.apply(raw.features()));
}

inline FusionModel model_for(const SceneFiles& scene,
                             const FusionConfig& config) {
  const std::size_t in_dim = scene.points.empty() ? 4 : scene.points.cols();
  return FusionModel::build(config, in_dim, scene.features.channels());
}

/// The whole pipeline on a scene directory's contents.
inline PipelineResult run_pipeline(const SceneFiles& scene,
                                   const FusionConfig& config) {
  config.validate();
  if (config.combiner == Combiner::kAdd &&
      scene.features.channels() != config.channels)
    throw ArgumentError("image features have " +
                        std::to_string(scene.features.channels()) +
                        " channels but fusion.channels is " +
                        std::to_string(config.channels));
  const FusionModel model = model_for(scene, config);
  const auto t0 = std::chrono::steady_clock::now();
  const SparseVoxelTensor voxels = encode_scene(scene, config, model);
  const double vox_ms = detail::ms_since(t0);
  PipelineResult r = fuse_voxels(voxels, scene.features, scene.calib,
                                 scene.image, scene.augmentation, config,
                                 model);
  r.times.voxelize_ms = vox_ms;
  r.times.total_ms += vox_ms;
  return r;
}

/// In-memory scene, as cmd_synth would write it.
inline SceneFiles synthesize(const FusionConfig& config) {
  SceneSpec spec = config.scene;
  spec.seed = config.seed;
  const Scene scene = generate_scene(spec);
  SceneFiles f;
  f.points = scene.points.cast<float>().cast<double>();
  f.calib = scene.calib;
  f.image = scene.image;
  f.boxes = scene.boxes;
  f.difficulties = scene.difficulties;
  f.features = generate_feature_map(spec, config.channels);
  f.seed = config.seed;
  return f;
}

/// First `n` voxels, evenly strided over an encoded scene tensor.
inline SparseVoxelTensor subsample(const SparseVoxelTensor& t, std::size_t n) {
  if (n > t.size())
    throw ArgumentError("scene has " + std::to_string(t.size()) +
                        " voxels, fewer than the requested " +
                        std::to_string(n));
  std::vector<Index3> idx(n);
  Matrix<double> feat(n, t.channels());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = i * t.size() / n;
    idx[i] = t.indices()[src];
    std::copy(t.features().row(src).begin(), t.features().row(src).end(),
              feat.row(i).begin());
  }
  return SparseVoxelTensor(t.spec(), std::move(idx), std::move(feat));
}

inline void write_summary(const PipelineResult& r, std::ostream& os) {
  os << "voxels: " << r.voxels.size() << "\n"
     << "channels: " << r.fused.channels() << "\n"
     << "valid_projections: " << r.point_patch.projection.valid_count() << "\n"
     << "alpha: " << r.fore_back.split.alpha() << "\n"
     << "beta: " << r.fore_back.split.beta() << "\n"
     << "expanded: " << r.fore_back.expanded.size() << "\n"
     << "collisions: " << r.fore_back.collisions << "\n"
     << "dense_foreground: " << r.fore_back.dense_foreground << "\n"
     << "output_voxels: " << r.fore_back.output.size() << "\n"
     << "time_voxelize_ms: " << r.times.voxelize_ms << "\n"
     << "time_upsample_ms: " << r.times.upsample_ms << "\n"
     << "time_point_patch_ms: " << r.times.point_patch_ms << "\n"
     << "time_fore_back_ms: " << r.times.fore_back_ms << "\n"
     << "wall_time_ms: " << r.times.total_ms << "\n";
}

}  // namespace voxfuse

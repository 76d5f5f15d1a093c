// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Synthesizes a small scene in memory and runs the full fusion pipeline.

#include <iostream>

#include "voxfuse/voxfuse.hpp"

int main() {
  voxfuse::FusionConfig config;
  config.seed = 3;
  config.scene.lidar.beams = 16;
  config.scene.lidar.azimuth_resolution_deg = 0.4;

  const voxfuse::SceneFiles scene = voxfuse::synthesize(config);
  const voxfuse::PipelineResult result = voxfuse::run_pipeline(scene, config);
  voxfuse::write_summary(result, std::cout);
}

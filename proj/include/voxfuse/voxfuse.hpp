// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.

#pragma once

#include "voxfuse/analytics.hpp"
#include "voxfuse/calib.hpp"
#include "voxfuse/config.hpp"
#include "voxfuse/errors.hpp"
#include "voxfuse/fbfusion.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/gradcheck.hpp"
#include "voxfuse/kitti.hpp"
#include "voxfuse/npy.hpp"
#include "voxfuse/p2fusion.hpp"
#include "voxfuse/pipeline.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/saf.hpp"
#include "voxfuse/scenegen.hpp"
#include "voxfuse/sweep.hpp"
#include "voxfuse/tensor.hpp"
#include "voxfuse/voxelgrid.hpp"

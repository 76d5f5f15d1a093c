// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "test_util.hpp"

using namespace voxfuse;
using testutil::cli;

namespace {

const std::string kSmall =
    " --set scene.beams=16 --set scene.azimuth_resolution=1.0";

FusionConfig small_config() {
  FusionConfig c;
  apply_config_text(c, "scene.beams = 16\nscene.azimuth_resolution = 1.0\n");
  return c;
}

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + ": ", 0) == 0) return line.substr(key.size() + 2);
  return {};
}

}  // namespace

TEST(Cli, SynthIsDeterministic) {
  testutil::TempDir dir("cli_synth");
  ASSERT_EQ(cli("synth --seed 3" + kSmall + " --out " + (dir / "a").string()).exit_code, 0);
  ASSERT_EQ(cli("synth --seed 3" + kSmall + " --out " + (dir / "b").string()).exit_code, 0);
  for (const char* f : {"velodyne.bin", "calib.txt", "image_features.npy", "boxes.txt",
                        "scene.txt"})
    EXPECT_EQ(testutil::read_bytes(dir / "a" / f), testutil::read_bytes(dir / "b" / f)) << f;
}

TEST(Cli, FuseMatchesLibrary) {
  testutil::TempDir dir("cli_fuse");
  const auto scene_dir = dir / "scene";
  ASSERT_EQ(cli("synth" + kSmall + " --out " + scene_dir.string()).exit_code, 0);
  const auto r = cli("fuse" + kSmall + " --scene " + scene_dir.string() + " --out " +
                     (dir / "out").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;

  const auto lib = run_pipeline(read_scene(scene_dir), small_config());
  const auto fb = read_sparse(dir / "out" / "fb_fused");
  EXPECT_EQ(fb.indices(), lib.fore_back.output.indices());
  EXPECT_EQ(fb.features(), lib.fore_back.output.features().cast<float>().cast<double>());
  EXPECT_EQ(fb.spec(), lib.fore_back.output.spec());
  const auto fused = read_sparse(dir / "out" / "fusion");
  EXPECT_EQ(fused.indices(), lib.fused.indices());
  const auto scores = npy::read_matrix<double>(dir / "out" / "scores.npy");
  EXPECT_EQ(scores, lib.fore_back.scores.values);
  const auto mask = npy::read_matrix<double>(dir / "out" / "foreground_mask.npy");
  double alpha = 0;
  for (double v : mask.data()) alpha += v;
  EXPECT_EQ(alpha, static_cast<double>(lib.fore_back.split.alpha()));

  const std::string summary =
      testutil::read_bytes(dir / "out" / "summary.txt");
  EXPECT_EQ(value_of(summary, "voxels"), std::to_string(lib.voxels.size()));
  EXPECT_EQ(value_of(summary, "output_voxels"),
            std::to_string(lib.fore_back.output.size()));
  EXPECT_EQ(std::stoul(value_of(summary, "alpha")) + std::stoul(value_of(summary, "beta")),
            lib.voxels.size());
}

TEST(Cli, EmptySceneSucceeds) {
  testutil::TempDir dir("cli_empty");
  const auto scene_dir = dir / "scene";
  ASSERT_EQ(cli("synth" + kSmall + " --out " + scene_dir.string()).exit_code, 0);
  testutil::write_bytes(scene_dir / "velodyne.bin", "");
  const auto r = cli("fuse --scene " + scene_dir.string() + " --out " +
                     (dir / "out").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(value_of(r.output, "voxels"), "0");
  EXPECT_EQ(read_sparse(dir / "out" / "fb_fused").size(), 0u);
  EXPECT_EQ(cli("project --scene " + scene_dir.string() + " --out " +
                (dir / "proj").string())
                .exit_code,
            0);
  EXPECT_EQ(cli("stats --scene " + scene_dir.string()).exit_code, 0);
}

TEST(Cli, ExitCodes) {
  testutil::TempDir dir("cli_exit");
  EXPECT_EQ(cli("").exit_code, 2);
  EXPECT_EQ(cli("frobnicate").exit_code, 2);
  EXPECT_EQ(cli("fuse --out " + (dir / "o").string()).exit_code, 2);
  EXPECT_EQ(cli("synth --set fusion.stage=9 --out " + (dir / "s").string()).exit_code, 2);
  EXPECT_EQ(cli("synth --set nope=1 --out " + (dir / "s").string()).exit_code, 2);
  EXPECT_EQ(cli("sweep --param lr").exit_code, 2);
  EXPECT_EQ(cli("sweep --param k_off --values 9,10").exit_code, 2);
  EXPECT_EQ(cli("fuse --scene " + (dir / "missing").string() + " --out " +
                (dir / "o").string())
                .exit_code,
            3);
  EXPECT_EQ(cli("synth --config " + (dir / "none.cfg").string() + " --out " +
                (dir / "s").string())
                .exit_code,
            3);
  EXPECT_EQ(cli("gradcheck --corrupt 0.01").exit_code, 4);
  EXPECT_EQ(cli("--help").exit_code, 0);
}

TEST(Cli, GradcheckPasses) {
  const auto r = cli("gradcheck");
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("tolerance"), std::string::npos);
}

TEST(Cli, ProjectAndStats) {
  testutil::TempDir dir("cli_stats");
  const auto scene_dir = dir / "scene";
  ASSERT_EQ(cli("synth" + kSmall + " --out " + scene_dir.string()).exit_code, 0);
  const auto p = cli("project --scene " + scene_dir.string() + " --out " +
                     (dir / "proj").string());
  ASSERT_EQ(p.exit_code, 0);
  const auto pixels = npy::read_matrix<double>(dir / "proj" / "pixels.npy");
  const auto valid = npy::read_matrix<double>(dir / "proj" / "valid.npy");
  EXPECT_EQ(pixels.cols(), 2u);
  double n_valid = 0;
  for (double v : valid.data()) n_valid += v;
  EXPECT_EQ(value_of(p.output, "valid"), std::to_string(static_cast<long>(n_valid)));

  const auto s = cli("stats --scene " + scene_dir.string() + " --csv " +
                     (dir / "hist.csv").string());
  ASSERT_EQ(s.exit_code, 0);
  for (const char* k : {"total_pixels", "hit_pixels", "occupancy_rate",
                        "fraction_below_180", "boxes"})
    EXPECT_FALSE(value_of(s.output, k).empty()) << k;
  EXPECT_LT(std::stod(value_of(s.output, "occupancy_rate")), 1.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "hist.csv"));
}

TEST(Cli, SweepRows) {
  testutil::TempDir dir("cli_sweep");
  const std::string coarse =
      kSmall + " --set grid.voxel_size=0.25,0.25,0.25 --set grid.range=0,-6,-3,16,6,1";
  const auto k = cli("sweep --param k_off" + coarse);
  ASSERT_EQ(k.exit_code, 0) << k.output;
  std::istringstream in(k.output);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("param,value,patch,", 0), 0u);
  std::vector<std::string> patches;
  while (std::getline(in, line)) patches.emplace_back(text::split(line, ',')[2]);
  EXPECT_EQ(patches, (std::vector<std::string>{"-1:1", "-1:2", "-2:2", "-2:3"}));

  const auto csv = dir / "t.csv";
  ASSERT_EQ(cli("sweep --param T --values 0.2,0.8" + coarse + " --out " + csv.string())
                .exit_code,
            0);
  const std::string t = testutil::read_bytes(csv);
  EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 3);
}

TEST(Cli, NumpyReadsOutputs) {
  if (!testutil::have_numpy()) GTEST_SKIP() << "numpy not available";
  testutil::TempDir dir("cli_numpy");
  const auto scene_dir = dir / "scene";
  ASSERT_EQ(cli("synth" + kSmall + " --out " + scene_dir.string()).exit_code, 0);
  ASSERT_EQ(cli("fuse" + kSmall + " --scene " + scene_dir.string() + " --out " +
                (dir / "out").string())
                .exit_code,
            0);
  const auto lib = run_pipeline(read_scene(scene_dir), small_config());
  const std::string script =
      "import numpy as np, sys\n"
      "d = sys.argv[1]\n"
      "i = np.load(d + '/fb_fused.idx.npy'); f = np.load(d + '/fb_fused.feat.npy')\n"
      "s = np.load(d + '/scores.npy')\n"
      "assert f.dtype == np.float32 and i.shape[1] == 3\n"
      "print(i.shape[0], f.shape[1], s.shape[1], repr(float(f.astype(np.float64).sum())))\n";
  testutil::write_bytes(dir / "check.py", script);
  const auto r = testutil::run(std::string(VOXFUSE_PYTHON) + " " +
                               (dir / "check.py").string() + " " + (dir / "out").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  std::istringstream in(r.output);
  std::size_t n = 0, c = 0, taps = 0;
  double sum = 0;
  in >> n >> c >> taps >> sum;
  EXPECT_EQ(n, lib.fore_back.output.size());
  EXPECT_EQ(c, 16u);
  EXPECT_EQ(taps, 27u);
  double ref = 0;
  const auto as_float = lib.fore_back.output.features().cast<float>();
  for (double v : as_float.data()) ref += v;
  EXPECT_NEAR(sum, ref, 1e-6 * std::max(1.0, std::abs(ref)));
}

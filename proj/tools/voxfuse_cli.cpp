// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// voxfuse: command-line front end.
//
// Exit codes: 0 success, 2 argument error, 3 IO/format error,
// 4 numeric or validation failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "voxfuse/voxfuse.hpp"

namespace fs = std::filesystem;
using namespace voxfuse;

namespace {

constexpr int kExitArgument = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_out) {
  cmd->add_option("--config", o.config_path, "Config file (key = value)");
  cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&o](std::uint64_t s) {
        o.seed = s;
        o.seed_set = true;
      },
      "Seed override");
  cmd->add_option("--set", o.overrides, "Override a config key: key=value");
  if (with_out) cmd->add_option("--out", o.out, "Output path")->required();
}

FusionConfig resolve_config(const CommonOptions& o) {
  FusionConfig c;
  if (!o.config_path.empty()) c = load_config(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed_set) c.set("seed", std::to_string(o.seed));
  c.validate();
  return c;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
}

int cmd_synth(const CommonOptions& o) {
  const FusionConfig c = resolve_config(o);
  SceneSpec spec = c.scene;
  spec.seed = c.seed;
  const Scene scene = generate_scene(spec);
  const FeatureMap<float> features = generate_feature_map(spec, c.channels);
  write_scene(scene, features, c.seed, o.out);
  std::cout << "points: " << scene.points.rows() << "\n"
            << "boxes: " << scene.boxes.size() << "\n"
            << "feature_map: " << features.width() << "x" << features.height()
            << "x" << features.channels() << "\n"
            << "out: " << o.out << "\n";
  return 0;
}

int cmd_project(const CommonOptions& o, const std::string& scene_dir) {
  const FusionConfig c = resolve_config(o);
  const SceneFiles scene = read_scene(scene_dir);
  const auto xyz = invert_augmentation(xyz_of(scene.points), scene.augmentation);
  const Projection p =
      project_points(xyz, scene.calib, scene.image, c.projection_scale);
  const fs::path out = o.out;
  ensure_dir(out);
  Matrix<double> pixels(p.size(), 2), depths(p.size(), 1), valid(p.size(), 1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    pixels(i, 0) = p.pixels[i].u;
    pixels(i, 1) = p.pixels[i].v;
    depths(i, 0) = p.depths[i];
    valid(i, 0) = p.valid[i];
  }
  npy::write(pixels, out / "pixels.npy");
  npy::write(depths, out / "depths.npy");
  npy::write(valid, out / "valid.npy");
  std::ostringstream s;
  s << "points: " << p.size() << "\n"
    << "valid: " << p.valid_count() << "\n";
  write_text(out / "summary.txt", s.str());
  std::cout << s.str();
  return 0;
}

void dump_fusion(const PipelineResult& r, const fs::path& out) {
  ensure_dir(out);
  write_sparse(r.fused, out / "fusion");
  write_sparse(r.fore_back.output, out / "fb_fused");
  npy::write(r.fore_back.scores.values, out / "scores.npy");
  Matrix<double> fore(r.voxels.size(), 1);
  for (auto i : r.fore_back.split.fore_rows) fore(i, 0) = 1.0;
  npy::write(fore, out / "foreground_mask.npy");
  const auto& e = r.fore_back.expanded;
  Matrix<double> targets(e.size(), 3);
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t a = 0; a < 3; ++a) targets(i, a) = e.target[i][a];
  npy::write(targets, out / "expanded_targets.npy");
  npy::write(e.features, out / "expanded_features.npy");
}

int cmd_fuse(const CommonOptions& o, const std::string& scene_dir) {
  const FusionConfig c = resolve_config(o);
  const SceneFiles scene = read_scene(scene_dir);
  const PipelineResult r = run_pipeline(scene, c);
  dump_fusion(r, o.out);
  std::ostringstream s;
  write_summary(r, s);
  write_text(fs::path(o.out) / "summary.txt", s.str());
  std::cout << s.str();
  return 0;
}

int cmd_stats(const CommonOptions& o, const std::string& scene_dir,
              const std::string& csv) {
  const FusionConfig c = resolve_config(o);
  const SceneFiles scene = read_scene(scene_dir);
  const auto xyz = xyz_of(scene.points);
  const OccupancyReport occ =
      occupancy(xyz, scene.calib, scene.image, c.projection_scale);
  const BoxPointHistogram hist =
      box_point_counts(xyz, scene.boxes, scene.difficulties);
  print_report(occ, std::cout);
  std::cout << "boxes: " << hist.counts.size() << "\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i)
    std::cout << "box_" << i << ": " << hist.counts[i] << " "
              << to_string(hist.difficulties[i]) << "\n";
  std::cout << "fraction_below_180: " << hist.fraction_below(180) << "\n";
  if (!csv.empty()) {
    std::ofstream out(csv, std::ios::trunc);
    if (!out) throw IoError("cannot write " + csv);
    const std::vector<std::size_t> thresholds{10, 20, 50, 100, 180, 500, 1000};
    write_histogram_csv(hist, thresholds, out);
  }
  return 0;
}

int cmd_gradcheck(const CommonOptions& o, double corrupt) {
  const FusionConfig c = resolve_config(o);
  GradCheckOptions g;
  g.channels = c.channels;
  g.patch = PatchPattern::from_count(c.patch_k).size();
  g.mlp_depth = c.mlp_depth;
  g.seed = c.seed;
  g.corrupt = corrupt;
  const GradCheckReport r = saf_gradcheck(g);
  print_report(r, std::cout);
  return r.passed() ? 0 : kExitNumeric;
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> v;
  for (auto tok : text::split(list, ',')) {
    if (tok.empty()) continue;
    try {
      v.push_back(text::parse_double(tok, "sweep value"));
    } catch (const ParseError& e) {
      throw ArgumentError(e.what());
    }
  }
  return v;
}

int cmd_sweep(const CommonOptions& o, const std::string& scene_dir,
              const std::string& param, const std::string& values) {
  const FusionConfig c = resolve_config(o);
  const SweepParam p = parse_sweep_param(param);
  const std::vector<double> v =
      values.empty() ? default_sweep_values(p) : parse_values(values);
  const SceneFiles scene = scene_dir.empty() ? synthesize(c)
                                             : read_scene(scene_dir);
  const auto rows = run_sweep(scene, c, p, v);
  if (o.out.empty() || o.out == "-") {
    write_sweep_csv(rows, std::cout);
  } else {
    std::ofstream out(o.out, std::ios::trunc);
    if (!out) throw IoError("cannot write " + o.out);
    write_sweep_csv(rows, out);
  }
  return 0;
}

int cmd_bench(const CommonOptions& o, std::size_t voxels, int runs) {
  const FusionConfig c = resolve_config(o);
  const SceneFiles scene = synthesize(c);
  const FusionModel model = model_for(scene, c);
  const SparseVoxelTensor all = encode_scene(scene, c, model);
  const SparseVoxelTensor input = subsample(all, voxels);
  std::vector<PipelineResult> results;
  for (int i = 0; i < runs; ++i) {
    results.push_back(fuse_voxels(input, scene.features, scene.calib,
                                  scene.image, {}, c, model));
    std::cout << "run_" << i << "_ms: " << results.back().times.total_ms
              << "\n";
  }
  bool deterministic = true;
  for (const auto& r : results)
    deterministic = deterministic &&
                    r.fore_back.output.features() ==
                        results.front().fore_back.output.features() &&
                    r.fore_back.output.indices() ==
                        results.front().fore_back.output.indices();
  write_summary(results.back(), std::cout);
  std::cout << "deterministic: " << (deterministic ? "yes" : "no") << "\n";
  return deterministic ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxfuse: LiDAR-camera voxel fusion pipeline"};
  app.require_subcommand(1);

  CommonOptions synth_o, project_o, fuse_o, stats_o, grad_o, sweep_o, bench_o;
  std::string scene_dir, csv, param = "T", values;
  double corrupt = 0.0;
  std::size_t bench_voxels = 20000;
  int bench_runs = 2;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  add_common(synth, synth_o, true);

  auto* project = app.add_subcommand("project", "Project scene points to pixels");
  add_common(project, project_o, true);
  project->add_option("--scene", scene_dir, "Scene directory")->required();

  auto* fuse = app.add_subcommand("fuse", "Run the full fusion pipeline");
  add_common(fuse, fuse_o, true);
  fuse->add_option("--scene", scene_dir, "Scene directory")->required();

  auto* stats = app.add_subcommand("stats", "Occupancy and box point counts");
  add_common(stats, stats_o, false);
  stats->add_option("--scene", scene_dir, "Scene directory")->required();
  stats->add_option("--csv", csv, "Write the box histogram as CSV");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference SAF check");
  add_common(grad, grad_o, false);
  grad->add_option("--corrupt", corrupt,
                   "Scale one analytic gradient by (1 + x); negative control");

  auto* sweep = app.add_subcommand("sweep", "Ablation sweep to CSV");
  add_common(sweep, sweep_o, false);
  sweep->add_option("--out", sweep_o.out, "CSV path (default stdout)");
  sweep->add_option("--scene", scene_dir,
                    "Scene directory (default: synthesize from config)");
  sweep->add_option("--param", param, "T, k_off or stage");
  sweep->add_option("--values", values, "Comma-separated values");

  auto* bench = app.add_subcommand("bench", "Time the fusion pipeline");
  add_common(bench, bench_o, false);
  bench->add_option("--voxels", bench_voxels, "Voxel count");
  bench->add_option("--runs", bench_runs, "Repetitions")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitArgument;
  }

  try {
    if (*synth) return cmd_synth(synth_o);
    if (*project) return cmd_project(project_o, scene_dir);
    if (*fuse) return cmd_fuse(fuse_o, scene_dir);
    if (*stats) return cmd_stats(stats_o, scene_dir, csv);
    if (*grad) return cmd_gradcheck(grad_o, corrupt);
    if (*sweep) return cmd_sweep(sweep_o, scene_dir, param, values);
    if (*bench) return cmd_bench(bench_o, bench_voxels, bench_runs);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitArgument;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitArgument;
}

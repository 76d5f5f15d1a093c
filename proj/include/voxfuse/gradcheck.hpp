// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference validation of saf_backward.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "voxfuse/rng.hpp"
#include "voxfuse/saf.hpp"

namespace voxfuse {

struct GradCheckOptions {
  std::size_t rows = 16;      // N
  std::size_t patch = 9;      // K
  std::size_t channels = 16;  // C
  std::size_t mlp_depth = 1;
  std::size_t chunk = 0;
  std::uint64_t seed = 0;
  double step = 1e-3;
  double tolerance = 1e-4;
  /// Negative control: scales the analytic gradient of the first checked
  /// tensor by (1 + corrupt) before comparing.
  double corrupt = 0.0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_abs_error = 0.0;
  /// max |analytic - numeric| / max(max |analytic|, max |numeric|).
  double rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  std::size_t resampled_rows = 0;
  bool passed() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const GradCheckEntry& e) { return e.passed; });
  }
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.rel_error);
    return m;
  }
};

namespace detail {

/// Largest change a single +-step perturbation can make to a layer-0
/// preactivation: a weight moves it by step * |x|, a bias by step, a point
/// input by step * sum_k |W[k*C + c, o]|.
inline double kink_margin(const Matrix<double>& x, const SafParameters& p,
                          double step) {
  double bound = 1.0;
  for (double v : x.data()) bound = std::max(bound, std::abs(v));
  const Matrix<double>& w = p.mlp.front().weight;
  const std::size_t c = p.channels;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t o = 0; o < c; ++o) {
      double s = 0.0;
      for (std::size_t k = 0; k < p.patch_size; ++k)
        s += std::abs(w(k * c + ch, o));
      bound = std::max(bound, s);
    }
  return 2.0 * step * bound;
}

/// Redraws input rows until no ReLU preactivation lies within the reach of
/// the difference stencil, so every checked point is differentiable.
/// Returns the number of rows redrawn.
inline std::size_t clear_relu_kinks(Matrix<double>& patch,
                                    Matrix<double>& point,
                                    const SafParameters& params, double step,
                                    std::size_t chunk, Rng& rng) {
  std::size_t redrawn = 0;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const auto r = saf_forward(patch, point, params, {chunk, true});
    std::vector<bool> bad(patch.rows(), false);
    bool any = false;
    for (std::size_t l = 0; l < r.cache->preactivations.size(); ++l) {
      const Matrix<double>& z = r.cache->preactivations[l];
      const double margin =
          l == 0 ? kink_margin(r.cache->layer_inputs[0], params, step)
                 : 2.0 * step;
      for (std::size_t i = 0; i < z.rows(); ++i)
        for (double v : z.row(i))
          if (std::abs(v) < margin) bad[i] = any = true;
    }
    if (!any) return redrawn;
    for (std::size_t i = 0; i < bad.size(); ++i) {
      if (!bad[i]) continue;
      ++redrawn;
      for (auto& v : patch.row(i)) v = rng.uniform(-1.0, 1.0);
      for (auto& v : point.row(i)) v = rng.uniform(-1.0, 1.0);
    }
  }
  throw NumericError("could not draw gradcheck inputs away from ReLU kinks");
}

}  // namespace detail

/// Checks every parameter and both inputs of a randomly initialized SAF block
/// against central differences of the scalar loss sum(grad_out * F_fusion).
inline GradCheckReport saf_gradcheck(const GradCheckOptions& o) {
  Rng rng(o.seed ^ 0x6a09e667f3bcc909ULL);
  SafParameters params =
      SafParameters::init(o.patch, o.channels, o.seed, o.mlp_depth);
  Matrix<double> patch(o.rows, o.patch * o.channels);
  Matrix<double> point(o.rows, o.channels);
  Matrix<double> grad_out(o.rows, o.channels);
  for (auto* m : {&patch, &point, &grad_out})
    for (auto& v : m->data()) v = rng.uniform(-1.0, 1.0);
  const std::size_t redrawn =
      detail::clear_relu_kinks(patch, point, params, o.step, o.chunk, rng);

  const SafOptions fwd{o.chunk, true};
  auto loss = [&]() {
    const auto r = saf_forward(patch, point, params, {o.chunk, false});
    double s = 0.0;
    for (std::size_t i = 0; i < r.fusion.data().size(); ++i)
      s += grad_out.data()[i] * r.fusion.data()[i];
    return s;
  };

  const auto forward = saf_forward(patch, point, params, fwd);
  SafGradients grads = saf_backward(*forward.cache, grad_out, params);

  struct Target {
    std::string name;
    std::span<double> value;
    std::span<double> grad;
  };
  std::vector<Target> targets;
  auto pnamed = params.named_tensors();
  auto gnamed = named_gradients(grads);
  for (std::size_t i = 0; i < pnamed.size(); ++i)
    targets.push_back({pnamed[i].first, pnamed[i].second, gnamed[i].second});
  targets.push_back({"input.patch", patch.data(), grads.patch.data()});
  targets.push_back({"input.point", point.data(), grads.point.data()});

  GradCheckReport report;
  report.tolerance = o.tolerance;
  report.resampled_rows = redrawn;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto& target = targets[t];
    const double bias = (t == 0) ? 1.0 + o.corrupt : 1.0;
    double max_abs = 0.0, max_a = 0.0, max_n = 0.0;
    for (std::size_t i = 0; i < target.value.size(); ++i) {
      const double saved = target.value[i];
      target.value[i] = saved + o.step;
      const double up = loss();
      target.value[i] = saved - o.step;
      const double down = loss();
      target.value[i] = saved;
      const double numeric = (up - down) / (2.0 * o.step);
      const double analytic = target.grad[i] * bias;
      max_abs = std::max(max_abs, std::abs(analytic - numeric));
      max_a = std::max(max_a, std::abs(analytic));
      max_n = std::max(max_n, std::abs(numeric));
    }
    GradCheckEntry e;
    e.name = target.name;
    e.count = target.value.size();
    e.max_abs_error = max_abs;
    const double denom = std::max({max_a, max_n, 1e-300});
    e.rel_error = (max_a == 0.0 && max_n == 0.0) ? 0.0 : max_abs / denom;
    e.passed = e.rel_error < o.tolerance;
    report.entries.push_back(std::move(e));
  }
  return report;
}

inline void print_report(const GradCheckReport& r, std::ostream& os) {
  for (const auto& e : r.entries)
    os << e.name << ": count=" << e.count << " max_abs_error=" << e.max_abs_error
       << " max_rel_error=" << e.rel_error << (e.passed ? " ok" : " FAIL")
       << "\n";
  os << "resampled_rows: " << r.resampled_rows << "\n"
     << "tolerance: " << r.tolerance << "\n"
     << "max_rel_error: " << r.max_rel_error() << "\n"
     << "result: " << (r.passed() ? "pass" : "fail") << "\n";
}

}  // namespace voxfuse

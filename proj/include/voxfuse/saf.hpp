// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Self-attention fusion block.
//
//   X      = reshape(F_KIV, N x K*C) + repeat(F_IV, K)       (N x K*C)
//   F_C    = MLP(X), every layer linear + ReLU               (N x C)
//   Q, K, V = F_C Wq, F_C Wk, F_C Wv
//   A      = softmax(Q K^T / sqrt(C))   row-wise, single head
//   F_fusion = A V
//
// Attention runs over all N rows, or over contiguous blocks of `chunk` rows
// (block-diagonal attention) when a chunk size is set and smaller than N.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "voxfuse/errors.hpp"
#include "voxfuse/linalg.hpp"
#include "voxfuse/npy.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/tensor.hpp"
#include "voxfuse/text.hpp"

namespace voxfuse {

struct Linear {
  Matrix<double> weight;  // in x out
  std::vector<double> bias;
};

struct SafParameters {
  std::size_t patch_size = 0;  // K
  std::size_t channels = 0;    // C
  std::uint64_t seed = 0;
  std::vector<Linear> mlp;     // K*C -> C, then C -> C
  Matrix<double> wq;
  Matrix<double> wk;
  Matrix<double> wv;

  /// Seeded init, every weight and bias uniform in +-1/sqrt(fan_in).
  /// Draw order: mlp layers (weight then bias), then wq, wk, wv.
  static SafParameters init(std::size_t patch_size, std::size_t channels,
                            std::uint64_t seed, std::size_t mlp_depth = 1) {
    if (patch_size < 1 || channels < 1 || mlp_depth < 1)
      throw ArgumentError("SAF needs K >= 1, C >= 1 and MLP depth >= 1");
    SafParameters p;
    p.patch_size = patch_size;
    p.channels = channels;
    p.seed = seed;
    Rng rng(seed);
    auto fill = [&](std::span<double> v, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& x : v) x = rng.uniform(-bound, bound);
    };
    for (std::size_t l = 0; l < mlp_depth; ++l) {
      const std::size_t in = l == 0 ? patch_size * channels : channels;
      Linear layer{Matrix<double>(in, channels),
                   std::vector<double>(channels)};
      fill(layer.weight.data(), in);
      fill(layer.bias, in);
      p.mlp.push_back(std::move(layer));
    }
    for (auto* w : {&p.wq, &p.wk, &p.wv}) {
      *w = Matrix<double>(channels, channels);
      fill(w->data(), channels);
    }
    return p;
  }

  /// Every tensor with a stable name, in serialization order.
  std::vector<std::pair<std::string, std::span<double>>> named_tensors() {
    std::vector<std::pair<std::string, std::span<double>>> out;
    for (std::size_t l = 0; l < mlp.size(); ++l) {
      out.emplace_back("mlp." + std::to_string(l) + ".weight",
                       mlp[l].weight.data());
      out.emplace_back("mlp." + std::to_string(l) + ".bias",
                       std::span<double>(mlp[l].bias));
    }
    out.emplace_back("attn.wq", wq.data());
    out.emplace_back("attn.wk", wk.data());
    out.emplace_back("attn.wv", wv.data());
    return out;
  }

  void validate() const {
    if (mlp.empty()) throw ArgumentError("SAF MLP has no layers");
    const std::size_t c = channels;
    for (std::size_t l = 0; l < mlp.size(); ++l) {
      const std::size_t in = l == 0 ? patch_size * c : c;
      if (mlp[l].weight.rows() != in || mlp[l].weight.cols() != c ||
          mlp[l].bias.size() != c)
        throw ArgumentError("SAF MLP layer " + std::to_string(l) +
                            " has inconsistent shape");
      require_finite(mlp[l].weight.data(), "SAF parameters");
      require_finite(std::span<const double>(mlp[l].bias), "SAF parameters");
    }
    for (const auto* w : {&wq, &wk, &wv}) {
      if (w->rows() != c || w->cols() != c)
        throw ArgumentError("SAF attention projection must be C x C");
      require_finite(w->data(), "SAF parameters");
    }
  }

  friend bool operator==(const SafParameters& a, const SafParameters& b) {
    if (a.patch_size != b.patch_size || a.channels != b.channels ||
        a.seed != b.seed || a.mlp.size() != b.mlp.size())
      return false;
    for (std::size_t l = 0; l < a.mlp.size(); ++l)
      if (!(a.mlp[l].weight == b.mlp[l].weight) ||
          a.mlp[l].bias != b.mlp[l].bias)
        return false;
    return a.wq == b.wq && a.wk == b.wk && a.wv == b.wv;
  }
};

struct SafOptions {
  /// Rows per attention block; 0 means full attention over all N rows.
  std::size_t chunk = 0;
  /// Keep the intermediates saf_backward needs (including every attention
  /// block, N * chunk doubles).
  bool keep_cache = false;
};

/// Forward intermediates for the backward pass.
struct SafCache {
  std::size_t rows = 0;
  std::size_t chunk = 0;
  std::vector<Matrix<double>> layer_inputs;   // H_0 = X, ..., H_{L-1}
  std::vector<Matrix<double>> preactivations; // Z_1..Z_L
  Matrix<double> fc;                          // F_C = relu(Z_L)
  Matrix<double> q, k, v;
  std::vector<Matrix<double>> attention;      // one block per chunk
};

struct SafResult {
  Matrix<double> fusion;
  std::optional<SafCache> cache;
};

struct SafGradients {
  Matrix<double> patch;  // d F_KIV, N x K*C
  Matrix<double> point;  // d F_IV, N x C
  std::vector<Linear> mlp;
  Matrix<double> wq, wk, wv;
};

namespace detail {

inline std::size_t effective_chunk(std::size_t chunk, std::size_t n) {
  return (chunk == 0 || chunk >= n) ? std::max<std::size_t>(n, 1) : chunk;
}

/// Row-wise softmax attention over rows [begin, end). When `weights` is set
/// the block's attention matrix is stored there. `Width` is the channel count
/// when known at compile time (0 = runtime `q.cols()`).
template <std::size_t Width>
void attend_block_impl(const Matrix<double>& q, const Matrix<double>& k,
                       const Matrix<double>& v, std::size_t begin,
                       std::size_t end, double inv_scale, Matrix<double>& out,
                       Matrix<double>* weights) {
  const std::size_t n = end - begin;
  const std::size_t c = Width ? Width : q.cols();
  // Keys transposed to C x n so the score loop runs over contiguous memory.
  std::vector<double> kt(c * n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto kj = k.row(begin + j);
    for (std::size_t m = 0; m < c; ++m) kt[m * n + j] = kj[m];
  }
  const double* vb = v.data().data() + begin * c;
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = q.data().data() + (begin + i) * c;
    std::fill(scores.begin(), scores.end(), 0.0);
    for (std::size_t m = 0; m < c; ++m) {
      const double qm = qi[m] * inv_scale;
      const double* km = kt.data() + m * n;
      for (std::size_t j = 0; j < n; ++j) scores[j] += qm * km[j];
    }
    const double max_s = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (auto& s : scores) {
      s = std::exp(s - max_s);
      total += s;
    }
    const double inv_total = 1.0 / total;
    double* o = out.data().data() + (begin + i) * c;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = scores[j] * inv_total;
      if (weights) (*weights)(i, j) = a;
      const double* vj = vb + j * c;
      for (std::size_t m = 0; m < c; ++m) o[m] += a * vj[m];
    }
  }
}

inline void attend_block(const Matrix<double>& q, const Matrix<double>& k,
                         const Matrix<double>& v, std::size_t begin,
                         std::size_t end, double inv_scale,
                         Matrix<double>& out, Matrix<double>* weights) {
  switch (q.cols()) {
    case 16:
      return attend_block_impl<16>(q, k, v, begin, end, inv_scale, out,
                                   weights);
    case 32:
      return attend_block_impl<32>(q, k, v, begin, end, inv_scale, out,
                                   weights);
    default:
      return attend_block_impl<0>(q, k, v, begin, end, inv_scale, out,
                                  weights);
  }
}

}  // namespace detail

/// Runs the SAF block on patch features (N x K*C) and point features (N x C).
inline SafResult saf_forward(const Matrix<double>& patch,
                             const Matrix<double>& point,
                             const SafParameters& params,
                             const SafOptions& options = {}) {
  params.validate();
  const std::size_t n = patch.rows();
  const std::size_t c = params.channels;
  const std::size_t kc = params.patch_size * c;
  if (point.rows() != n)
    throw ArgumentError("SAF inputs disagree on the number of voxels");
  if (n > 0 && (patch.cols() != kc || point.cols() != c))
    throw ArgumentError("SAF input shapes do not match K=" +
                        std::to_string(params.patch_size) +
                        ", C=" + std::to_string(c));

  Matrix<double> x(n, kc);
  for (std::size_t i = 0; i < n; ++i) {
    const auto pr = patch.row(i);
    const auto fr = point.row(i);
    auto xr = x.row(i);
    for (std::size_t j = 0; j < kc; ++j) xr[j] = pr[j] + fr[j % c];
  }
  require_finite(x.data(), "SAF input sum");

  SafCache cache;
  cache.rows = n;
  cache.chunk = options.chunk;
  Matrix<double> h = std::move(x);
  for (std::size_t l = 0; l < params.mlp.size(); ++l) {
    Matrix<double> z = linalg::matmul(h, params.mlp[l].weight);
    for (std::size_t i = 0; i < n; ++i) {
      auto zr = z.row(i);
      for (std::size_t j = 0; j < c; ++j) zr[j] += params.mlp[l].bias[j];
    }
    require_finite(z.data(), "SAF MLP layer " + std::to_string(l));
    Matrix<double> act = z;
    for (auto& v : act.data()) v = std::max(v, 0.0);
    if (options.keep_cache) {
      cache.layer_inputs.push_back(std::move(h));
      cache.preactivations.push_back(std::move(z));
    }
    h = std::move(act);
  }

  Matrix<double> q = linalg::matmul(h, params.wq);
  Matrix<double> k = linalg::matmul(h, params.wk);
  Matrix<double> v = linalg::matmul(h, params.wv);
  require_finite(q.data(), "SAF query projection");
  require_finite(k.data(), "SAF key projection");
  require_finite(v.data(), "SAF value projection");

  Matrix<double> out(n, c);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(c));
  const std::size_t step = detail::effective_chunk(options.chunk, n);
  for (std::size_t begin = 0; begin < n; begin += step) {
    const std::size_t end = std::min(n, begin + step);
    if (options.keep_cache) {
      Matrix<double> a(end - begin, end - begin);
      detail::attend_block(q, k, v, begin, end, inv_scale, out, &a);
      cache.attention.push_back(std::move(a));
    } else {
      detail::attend_block(q, k, v, begin, end, inv_scale, out, nullptr);
    }
  }
  require_finite(out.data(), "SAF attention output");

  SafResult result{std::move(out), std::nullopt};
  if (options.keep_cache) {
    cache.fc = std::move(h);
    cache.q = std::move(q);
    cache.k = std::move(k);
    cache.v = std::move(v);
    result.cache = std::move(cache);
  }
  return result;
}

/// Reverse-mode gradients of saf_forward for upstream gradient `grad_out`.
inline SafGradients saf_backward(const SafCache& cache,
                                 const Matrix<double>& grad_out,
                                 const SafParameters& params) {
  const std::size_t n = cache.rows;
  const std::size_t c = params.channels;
  const std::size_t kc = params.patch_size * c;
  if (grad_out.rows() != n || (n > 0 && grad_out.cols() != c))
    throw ArgumentError("SAF gradient shape does not match the forward cache");
  if (cache.preactivations.size() != params.mlp.size() ||
      cache.fc.rows() != n || (n > 0 && cache.fc.cols() != c))
    throw ArgumentError("SAF cache does not match these parameters");

  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(c));
  Matrix<double> dq(n, c), dk(n, c), dv(n, c);
  const std::size_t step = detail::effective_chunk(cache.chunk, n);
  std::size_t block = 0;
  for (std::size_t begin = 0; begin < n; begin += step, ++block) {
    const std::size_t end = std::min(n, begin + step);
    const std::size_t m = end - begin;
    if (block >= cache.attention.size() || cache.attention[block].rows() != m)
      throw ArgumentError("SAF cache attention blocks do not match");
    const Matrix<double>& a = cache.attention[block];
    std::vector<double> da(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto go = grad_out.row(begin + i);
      double weighted = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const auto vj = cache.v.row(begin + j);
        auto dvj = dv.row(begin + j);
        double s = 0.0;
        for (std::size_t t = 0; t < c; ++t) {
          s += go[t] * vj[t];
          dvj[t] += a(i, j) * go[t];
        }
        da[j] = s;
        weighted += a(i, j) * s;
      }
      const auto qi = cache.q.row(begin + i);
      auto dqi = dq.row(begin + i);
      for (std::size_t j = 0; j < m; ++j) {
        const double ds = a(i, j) * (da[j] - weighted) * inv_scale;
        const auto kj = cache.k.row(begin + j);
        auto dkj = dk.row(begin + j);
        for (std::size_t t = 0; t < c; ++t) {
          dqi[t] += ds * kj[t];
          dkj[t] += ds * qi[t];
        }
      }
    }
  }

  SafGradients g;
  g.wq = linalg::matmul_tn(cache.fc, dq);
  g.wk = linalg::matmul_tn(cache.fc, dk);
  g.wv = linalg::matmul_tn(cache.fc, dv);
  Matrix<double> dh = linalg::matmul_nt(dq, params.wq);
  linalg::add_inplace(dh, linalg::matmul_nt(dk, params.wk));
  linalg::add_inplace(dh, linalg::matmul_nt(dv, params.wv));

  g.mlp.resize(params.mlp.size());
  for (std::size_t l = params.mlp.size(); l-- > 0;) {
    const Matrix<double>& z = cache.preactivations[l];
    Matrix<double> dz = std::move(dh);
    for (std::size_t i = 0; i < dz.data().size(); ++i)
      if (!(z.data()[i] > 0.0)) dz.data()[i] = 0.0;
    g.mlp[l].weight = linalg::matmul_tn(cache.layer_inputs[l], dz);
    g.mlp[l].bias.assign(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) g.mlp[l].bias[j] += dz(i, j);
    dh = linalg::matmul_nt(dz, params.mlp[l].weight);
  }

  g.patch = std::move(dh);
  g.point = Matrix<double>(n, c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kc; ++j) g.point(i, j % c) += g.patch(i, j);
  return g;
}

/// Gradients in the same order and naming as SafParameters::named_tensors.
inline std::vector<std::pair<std::string, std::span<double>>> named_gradients(
    SafGradients& g) {
  std::vector<std::pair<std::string, std::span<double>>> out;
  for (std::size_t l = 0; l < g.mlp.size(); ++l) {
    out.emplace_back("mlp." + std::to_string(l) + ".weight",
                     g.mlp[l].weight.data());
    out.emplace_back("mlp." + std::to_string(l) + ".bias",
                     std::span<double>(g.mlp[l].bias));
  }
  out.emplace_back("attn.wq", g.wq.data());
  out.emplace_back("attn.wk", g.wk.data());
  out.emplace_back("attn.wv", g.wv.data());
  return out;
}

// Directory layout: manifest.txt plus one float64 NPY per tensor.
//   patch_size: K
//   channels: C
//   mlp_depth: L
//   seed: S
//   tensor: <name> <rows> <cols>      (one line per tensor)

inline void save_parameters(SafParameters params,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "patch_size: " << params.patch_size << "\n"
           << "channels: " << params.channels << "\n"
           << "mlp_depth: " << params.mlp.size() << "\n"
           << "seed: " << params.seed << "\n";
  auto write_one = [&](const std::string& name, std::size_t rows,
                       std::size_t cols, std::span<const double> data) {
    const std::size_t shape[2] = {rows, cols};
    npy::save<double>(dir / (name + ".npy"), shape, data);
    manifest << "tensor: " << name << " " << rows << " " << cols << "\n";
  };
  for (std::size_t l = 0; l < params.mlp.size(); ++l) {
    const auto& layer = params.mlp[l];
    write_one("mlp." + std::to_string(l) + ".weight", layer.weight.rows(),
              layer.weight.cols(), layer.weight.data());
    write_one("mlp." + std::to_string(l) + ".bias", 1, layer.bias.size(),
              layer.bias);
  }
  write_one("attn.wq", params.wq.rows(), params.wq.cols(), params.wq.data());
  write_one("attn.wk", params.wk.rows(), params.wk.cols(), params.wk.data());
  write_one("attn.wv", params.wv.rows(), params.wv.cols(), params.wv.data());
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.txt").string());
  out << manifest.str();
}

inline SafParameters load_parameters(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw IoError("cannot open " + (dir / "manifest.txt").string());
  std::size_t k = 0, c = 0, depth = 0;
  std::uint64_t seed = 0;
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> tensors;
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const auto key = text::trim(std::string_view(line).substr(0, colon));
    const auto value = text::trim(std::string_view(line).substr(colon + 1));
    if (key == "patch_size")
      k = text::parse_u64(value, "patch_size");
    else if (key == "channels")
      c = text::parse_u64(value, "channels");
    else if (key == "mlp_depth")
      depth = text::parse_u64(value, "mlp_depth");
    else if (key == "seed")
      seed = text::parse_u64(value, "seed");
    else if (key == "tensor") {
      const auto toks = text::split_ws(value);
      if (toks.size() != 3) throw ParseError("bad tensor line in manifest");
      tensors.emplace_back(std::string(toks[0]),
                           text::parse_u64(toks[1], "rows"),
                           text::parse_u64(toks[2], "cols"));
    }
  }
  SafParameters p = SafParameters::init(k, c, seed, depth);
  auto named = p.named_tensors();
  if (named.size() != tensors.size())
    throw FormatError("SAF manifest lists " + std::to_string(tensors.size()) +
                      " tensors, expected " + std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, rows, cols] = tensors[i];
    if (name != named[i].first || rows * cols != named[i].second.size())
      throw FormatError("SAF manifest entry " + name + " does not match");
    const auto m = npy::read_matrix<double>(dir / (name + ".npy"));
    if (m.data().size() != named[i].second.size())
      throw FormatError(name + ".npy has the wrong size");
    std::copy(m.data().begin(), m.data().end(), named[i].second.begin());
  }
  p.validate();
  return p;
}

}  // namespace voxfuse

// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// The handful of dense products the SAF block needs. Plain loops, i-k-j order
// so the innermost loop walks contiguous memory.

#pragma once

#include <string>

#include "voxfuse/errors.hpp"
#include "voxfuse/tensor.hpp"

namespace voxfuse::linalg {

/// A * B.
inline Matrix<double> matmul(const Matrix<double>& a, const Matrix<double>& b) {
  if (a.cols() != b.rows())
    throw ArgumentError("matmul shape mismatch: " + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()));
  Matrix<double> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      const auto br = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += s * br[j];
    }
  }
  return out;
}

/// A^T * B.
inline Matrix<double> matmul_tn(const Matrix<double>& a,
                                const Matrix<double>& b) {
  if (a.rows() != b.rows())
    throw ArgumentError("matmul_tn shape mismatch");
  Matrix<double> out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ar = a.row(r);
    const auto br = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = ar[i];
      auto o = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += s * br[j];
    }
  }
  return out;
}

/// A * B^T.
inline Matrix<double> matmul_nt(const Matrix<double>& a,
                                const Matrix<double>& b) {
  if (a.cols() != b.cols())
    throw ArgumentError("matmul_nt shape mismatch");
  Matrix<double> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

inline void add_inplace(Matrix<double>& a, const Matrix<double>& b) {
  auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

}  // namespace voxfuse::linalg

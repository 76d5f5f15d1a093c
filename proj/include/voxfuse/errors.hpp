// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace voxfuse {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad caller input: wrong shapes, out-of-range hyperparameters.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Bytes on disk do not follow the expected binary layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input using a feature we do not read (e.g. Fortran order).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Text input (calibration, config) could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a computation; the message names the stage.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace voxfuse

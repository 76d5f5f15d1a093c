// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Reader and writer for NPY version 1.0 files holding little-endian float32
// or float64 data in C order. Files written here load in numpy unchanged.

#pragma once

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "voxfuse/errors.hpp"
#include "voxfuse/tensor.hpp"

namespace voxfuse::npy {

static_assert(std::endian::native == std::endian::little,
              "NPY IO assumes a little-endian host");

inline constexpr std::string_view kMagic = "\x93NUMPY";

/// Raw contents of an NPY file. Unlike Tensor, zero extents are allowed here
/// because numpy happily writes (0, C) arrays.
struct Array {
  std::vector<std::size_t> shape;
  std::variant<std::vector<float>, std::vector<double>> data;

  bool is_float32() const noexcept { return data.index() == 0; }
};

template <Real T>
constexpr std::string_view descr() {
  if constexpr (std::same_as<T, float>)
    return "<f4";
  else
    return "<f8";
}

namespace detail {

inline std::string header_dict(std::string_view descr,
                               std::span<const std::size_t> shape) {
  std::string dict = "{'descr': '";
  dict += descr;
  dict += "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) dict += ",";
    if (i + 1 < shape.size()) dict += " ";
  }
  dict += "), }";
  // magic(6) + version(2) + header_len(2) + dict + padding + '\n' is a
  // multiple of 64.
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict += '\n';
  return dict;
}

// Returns the text following `'key':` in the header dict.
inline std::string_view value_after(std::string_view dict,
                                    std::string_view key) {
  const std::string quoted = "'" + std::string(key) + "'";
  auto pos = dict.find(quoted);
  if (pos == std::string_view::npos)
    throw FormatError("NPY header lacks key " + quoted);
  pos = dict.find(':', pos + quoted.size());
  if (pos == std::string_view::npos)
    throw FormatError("NPY header key " + quoted + " has no value");
  ++pos;
  while (pos < dict.size() && dict[pos] == ' ') ++pos;
  return dict.substr(pos);
}

inline std::vector<std::size_t> parse_shape(std::string_view v) {
  if (v.empty() || v.front() != '(')
    throw FormatError("NPY shape is not a tuple");
  const auto close = v.find(')');
  if (close == std::string_view::npos)
    throw FormatError("NPY shape tuple is not closed");
  std::vector<std::size_t> shape;
  std::size_t i = 1;
  while (i < close) {
    while (i < close && (v[i] == ' ' || v[i] == ',')) ++i;
    if (i >= close) break;
    if (!std::isdigit(static_cast<unsigned char>(v[i])))
      throw FormatError("NPY shape has a non-integer extent");
    std::size_t e = 0;
    while (i < close && std::isdigit(static_cast<unsigned char>(v[i])))
      e = e * 10 + static_cast<std::size_t>(v[i++] - '0');
    shape.push_back(e);
  }
  return shape;
}

}  // namespace detail

/// Loads a float32 or float64 NPY v1.0 file.
inline Array load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 10 ||
      std::string_view(bytes.data(), kMagic.size()) != kMagic)
    throw FormatError("bad NPY magic" + where);
  const auto major = static_cast<unsigned char>(bytes[6]);
  const auto minor = static_cast<unsigned char>(bytes[7]);
  if (major != 1 || minor != 0)
    throw UnsupportedError("NPY version " + std::to_string(major) + "." +
                           std::to_string(minor) + where +
                           " (only 1.0 is read)");
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]) |
                                 (static_cast<unsigned char>(bytes[9]) << 8);
  if (bytes.size() < 10 + header_len)
    throw FormatError("truncated NPY header" + where);
  const std::string_view dict(bytes.data() + 10, header_len);
  if (dict.empty() || dict.front() != '{')
    throw FormatError("NPY header is not a dict" + where);

  const auto descr_v = detail::value_after(dict, "descr");
  if (descr_v.size() < 5 || descr_v.front() != '\'')
    throw FormatError("NPY descr is not a string" + where);
  const auto descr = descr_v.substr(1, descr_v.find('\'', 1) - 1);
  if (descr != "<f4" && descr != "<f8")
    throw UnsupportedError("NPY dtype '" + std::string(descr) + "'" + where +
                           " (only <f4 and <f8 are read)");

  const auto fortran = detail::value_after(dict, "fortran_order");
  if (fortran.starts_with("True"))
    throw UnsupportedError("Fortran-ordered NPY" + where);
  if (!fortran.starts_with("False"))
    throw FormatError("NPY fortran_order is not a bool" + where);

  Array out;
  out.shape = detail::parse_shape(detail::value_after(dict, "shape"));
  std::size_t count = 1;
  for (auto e : out.shape) count *= e;
  const std::size_t item = descr == "<f4" ? 4 : 8;
  const std::size_t payload = bytes.size() - 10 - header_len;
  if (payload != count * item)
    throw FormatError("NPY payload holds " + std::to_string(payload) +
                      " bytes, shape needs " + std::to_string(count * item) +
                      where);
  const char* src = bytes.data() + 10 + header_len;
  if (item == 4) {
    std::vector<float> v(count);
    if (count) std::memcpy(v.data(), src, payload);
    out.data = std::move(v);
  } else {
    std::vector<double> v(count);
    if (count) std::memcpy(v.data(), src, payload);
    out.data = std::move(v);
  }
  return out;
}

/// Writes `data` with the given shape as NPY v1.0.
template <Real T>
void save(const std::filesystem::path& path, std::span<const std::size_t> shape,
          std::span<const T> data) {
  std::size_t count = 1;
  for (auto e : shape) count *= e;
  if (count != data.size())
    throw ArgumentError("NPY save: data length does not match shape " +
                        shape_string(shape));
  const std::string dict = detail::header_dict(descr<T>(), shape);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
  const char version[2] = {1, 0};
  out.write(version, 2);
  const char len[2] = {static_cast<char>(dict.size() & 0xff),
                       static_cast<char>((dict.size() >> 8) & 0xff)};
  out.write(len, 2);
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size_bytes()));
  if (!out) throw IoError("write failed for " + path.string());
}

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

/// Reads an NPY file into a Tensor of its stored dtype.
inline AnyTensor read(const std::filesystem::path& path) {
  Array a = load(path);
  if (a.is_float32())
    return Tensor<float>(a.shape, std::get<0>(std::move(a.data)));
  return Tensor<double>(a.shape, std::get<1>(std::move(a.data)));
}

/// Reads an NPY file and converts to T (float64 to float32 rounds).
template <Real T>
Tensor<T> read_as(const std::filesystem::path& path) {
  Array a = load(path);
  return std::visit(
      [&](auto& v) {
        return Tensor<T>(a.shape, std::vector<T>(v.begin(), v.end()));
      },
      a.data);
}

template <Real T>
void write(const Tensor<T>& t, const std::filesystem::path& path) {
  save<T>(path, t.shape(), t.data());
}

template <Real T>
void write(const Matrix<T>& m, const std::filesystem::path& path) {
  const std::size_t shape[2] = {m.rows(), m.cols()};
  save<T>(path, shape, m.data());
}

/// Reads a rank-2 (or rank-1, as a column) array into a Matrix.
template <Real T>
Matrix<T> read_matrix(const std::filesystem::path& path) {
  Array a = load(path);
  if (a.shape.size() != 1 && a.shape.size() != 2)
    throw FormatError("expected a rank-2 array in " + path.string() +
                      ", got " + shape_string(a.shape));
  const std::size_t rows = a.shape[0];
  const std::size_t cols = a.shape.size() == 2 ? a.shape[1] : 1;
  return std::visit(
      [&](auto& v) {
        return Matrix<T>(rows, cols, std::vector<T>(v.begin(), v.end()));
      },
      a.data);
}

}  // namespace voxfuse::npy

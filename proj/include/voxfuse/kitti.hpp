// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// KITTI on-disk formats: calib text files, velodyne .bin scans, and a small
// text form for augmentation records.

#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "voxfuse/calib.hpp"
#include "voxfuse/errors.hpp"
#include "voxfuse/tensor.hpp"
#include "voxfuse/text.hpp"

namespace voxfuse::kitti {

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path,
                       std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

template <std::size_t R, std::size_t C>
std::array<std::array<double, C>, R> to_matrix(const std::vector<double>& v) {
  std::array<std::array<double, C>, R> m{};
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) m[i][j] = v[i * C + j];
  return m;
}

template <std::size_t R, std::size_t C>
void append_row(std::string& out, std::string_view key,
                const std::array<std::array<double, C>, R>& m) {
  out += key;
  out += ':';
  for (const auto& row : m)
    for (double v : row) {
      out += ' ';
      out += text::format_double(v);
    }
  out += '\n';
}

}  // namespace detail

/// Parses calib text (`KEY: v1 ... vn` per line). P2, R0_rect and
/// Tr_velo_to_cam are required; every other key is ignored.
inline KittiCalibration parse_calib_text(std::string_view contents) {
  std::map<std::string, std::vector<double>, std::less<>> values;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    auto end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    const auto line = text::trim(contents.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const std::string key(text::trim(line.substr(0, colon)));
    std::vector<double> nums;
    for (auto tok : text::split_ws(line.substr(colon + 1)))
      nums.push_back(text::parse_double(tok, key));
    values[key] = std::move(nums);
  }
  auto take = [&](std::string_view key, std::size_t count) {
    auto it = values.find(key);
    if (it == values.end())
      throw ParseError("calib is missing required key " + std::string(key));
    if (it->second.size() != count)
      throw ParseError("calib key " + std::string(key) + " has " +
                       std::to_string(it->second.size()) + " values, expected " +
                       std::to_string(count));
    return it->second;
  };
  KittiCalibration c;
  c.p2 = detail::to_matrix<3, 4>(take("P2", 12));
  c.r0_rect = detail::to_matrix<3, 3>(take("R0_rect", 9));
  c.tr_velo_to_cam = detail::to_matrix<3, 4>(take("Tr_velo_to_cam", 12));
  return c;
}

inline KittiCalibration parse_calib(const std::filesystem::path& path) {
  try {
    return parse_calib_text(detail::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// Writes P2, R0_rect and Tr_velo_to_cam with shortest round-trip numbers,
/// so serialize(parse(serialize(c))) is byte-identical to serialize(c).
inline std::string serialize_calib(const KittiCalibration& c) {
  std::string out;
  detail::append_row(out, "P2", c.p2);
  detail::append_row(out, "R0_rect", c.r0_rect);
  detail::append_row(out, "Tr_velo_to_cam", c.tr_velo_to_cam);
  return out;
}

inline void write_calib(const KittiCalibration& c,
                        const std::filesystem::path& path) {
  detail::write_file(path, serialize_calib(c));
}

/// Reads a velodyne scan: packed little-endian float32 (x, y, z, reflectance).
inline Matrix<float> read_velodyne(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() % 16 != 0)
    throw FormatError(path.string() + ": velodyne file length " +
                      std::to_string(bytes.size()) +
                      " is not a multiple of 16 bytes");
  Matrix<float> m(bytes.size() / 16, 4);
  if (!bytes.empty()) std::memcpy(m.data().data(), bytes.data(), bytes.size());
  return m;
}

inline void write_velodyne(const Matrix<float>& points,
                           const std::filesystem::path& path) {
  if (points.cols() != 4 && !points.empty())
    throw ArgumentError("velodyne records need 4 columns");
  const auto bytes = std::as_bytes(points.data());
  detail::write_file(path, {reinterpret_cast<const char*>(bytes.data()),
                            bytes.size()});
}

/// One transform per line: `flip_y`, `rotate_z <radians>`, `scale <factor>`.
inline std::string serialize_augmentation(const AugmentationRecord& r) {
  std::string out;
  for (const auto& t : r.transforms) {
    if (std::holds_alternative<FlipY>(t))
      out += "flip_y\n";
    else if (const auto* rz = std::get_if<RotateZ>(&t))
      out += "rotate_z " + text::format_double(rz->radians) + "\n";
    else
      out += "scale " +
             text::format_double(std::get<UniformScale>(t).factor) + "\n";
  }
  return out;
}

inline AugmentationRecord parse_augmentation_text(std::string_view contents) {
  AugmentationRecord r;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    auto end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    const auto toks =
        text::split_ws(text::trim(contents.substr(pos, end - pos)));
    pos = end + 1;
    if (toks.empty() || toks[0].starts_with('#')) continue;
    if (toks[0] == "flip_y" && toks.size() == 1)
      r.transforms.emplace_back(FlipY{});
    else if (toks[0] == "rotate_z" && toks.size() == 2)
      r.transforms.emplace_back(RotateZ{text::parse_double(toks[1], "rotate_z")});
    else if (toks[0] == "scale" && toks.size() == 2)
      r.transforms.emplace_back(UniformScale{text::parse_double(toks[1], "scale")});
    else
      throw ParseError("unknown augmentation line '" + std::string(toks[0]) +
                       "'");
  }
  r.validate();
  return r;
}

}  // namespace voxfuse::kitti

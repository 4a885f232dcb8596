/* Copyright 2026 The musco-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "musco/dataset.hpp"

namespace musco {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

/// Unsigned-byte IDX payload with the expected magic number.
inline IdxArray parse_idx(const std::vector<std::uint8_t>& bytes, std::uint32_t magic,
                          const std::string& what = "IDX data") {
  auto be32 = [&](std::size_t at) {
    return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
           (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
  };
  if (bytes.size() < 4) throw std::runtime_error(what + ": file shorter than the magic number");
  const std::uint32_t got = be32(0);
  if (got != magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad magic 0x%08x, expected 0x%08x", got, magic);
    throw std::runtime_error(what + ": " + buf);
  }
  const std::size_t ndim = magic & 0xff;
  const std::size_t header = 4 + 4 * ndim;
  if (bytes.size() < header)
    throw std::runtime_error(what + ": truncated header, expected " + std::to_string(header) +
                             " bytes, got " + std::to_string(bytes.size()));
  IdxArray a;
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    a.dims.push_back(be32(4 + 4 * i));
    count *= a.dims.back();
  }
  const std::size_t payload = bytes.size() - header;
  if (payload != count)
    throw std::runtime_error(what + ": " + (payload < count ? "truncated" : "oversized") +
                             " payload, expected " + std::to_string(count) + " bytes, got " +
                             std::to_string(payload));
  a.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return a;
}

inline std::vector<std::uint8_t> encode_idx(const IdxArray& a, std::uint32_t magic) {
  std::vector<std::uint8_t> out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put(magic);
  for (std::uint32_t d : a.dims) put(d);
  out.insert(out.end(), a.values.begin(), a.values.end());
  return out;
}

/// Images (n x rows x cols) and labels from two IDX files; pixels scaled to [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::size_t classes = 0) {
  const IdxArray img = parse_idx(read_file_bytes(images_path), kIdxImagesMagic, images_path);
  const IdxArray lab = parse_idx(read_file_bytes(labels_path), kIdxLabelsMagic, labels_path);
  if (img.dims[0] != lab.dims[0])
    throw std::runtime_error("image count " + std::to_string(img.dims[0]) + " != label count " +
                             std::to_string(lab.dims[0]));
  Dataset ds;
  ds.shape = {img.dims[1], img.dims[2], 1};
  ds.pixels.reserve(img.values.size());
  for (std::uint8_t v : img.values) ds.pixels.push_back(v / 255.0);
  int top = -1;
  for (std::uint8_t v : lab.values) {
    ds.labels.push_back(v);
    top = std::max<int>(top, v);
  }
  ds.classes = std::max<std::size_t>(classes, static_cast<std::size_t>(top + 1));
  ds.validate();
  return ds;
}

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t samples = 1000;
  std::size_t size = 28;
  double contrast = 1.0;  // template amplitude around mid-gray
  double noise = 0.25;    // per-pixel Gaussian noise
  std::uint64_t split = 0;  // splits share templates, not noise
};

struct SyntheticData {
  IdxArray images, labels;
};

/// Per-class frozen random template plus noise, quantized to bytes. Labels
/// cycle through the classes. Templates depend on the seed only.
inline SyntheticData gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.classes < 1 || spec.classes > 256 || spec.size < 1)
    throw std::invalid_argument("gen_synthetic: bad class count or image size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t px = spec.size * spec.size;
  std::vector<double> templates(spec.classes * px);
  for (double& t : templates) t = uni(rng);
  rng.seed(seed ^ (0x9e3779b97f4a7c15ULL * (spec.split + 1)));

  SyntheticData out;
  const auto n = static_cast<std::uint32_t>(spec.samples);
  const auto s = static_cast<std::uint32_t>(spec.size);
  out.images.dims = {n, s, s};
  out.labels.dims = {n};
  out.images.values.reserve(spec.samples * px);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t c = i % spec.classes;
    out.labels.values.push_back(static_cast<std::uint8_t>(c));
    for (std::size_t p = 0; p < px; ++p) {
      const double v = 0.5 + spec.contrast * (templates[c * px + p] - 0.5) + spec.noise * normal(rng);
      out.images.values.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
  }
  return out;
}

inline void write_synthetic(const SyntheticData& d, const std::string& images_path,
                            const std::string& labels_path) {
  write_file_bytes(images_path, encode_idx(d.images, kIdxImagesMagic));
  write_file_bytes(labels_path, encode_idx(d.labels, kIdxLabelsMagic));
}

/// In-memory dataset from generated arrays, without going through files.
inline Dataset to_dataset(const SyntheticData& d, std::size_t classes) {
  Dataset ds;
  ds.shape = {d.images.dims[1], d.images.dims[2], 1};
  ds.classes = classes;
  for (std::uint8_t v : d.images.values) ds.pixels.push_back(v / 255.0);
  for (std::uint8_t v : d.labels.values) ds.labels.push_back(v);
  ds.validate();
  return ds;
}

}  // namespace musco

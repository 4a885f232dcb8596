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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "musco/idx.hpp"
#include "musco/model_graph.hpp"

namespace musco {

inline constexpr int kManifestVersion = 1;

/// Manifest text plus the float32 little-endian weight blob it describes.
struct SerializedModel {
  std::string manifest;
  std::vector<std::uint8_t> blob;
};

inline std::uint32_t crc32_of(const std::vector<std::uint8_t>& bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  std::size_t at = 0;
  while (at < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - at, 1u << 30));
    c = crc32(c, bytes.data() + at, n);
    at += n;
  }
  return static_cast<std::uint32_t>(c);
}

namespace detail {

inline void put_f32(std::vector<std::uint8_t>& blob, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int s = 0; s < 32; s += 8) blob.push_back(static_cast<std::uint8_t>(bits >> s));
}

inline double get_f32(const std::vector<std::uint8_t>& blob, std::size_t at) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= std::uint32_t{blob[at + static_cast<std::size_t>(k)]} << (8 * k);
  return static_cast<double>(std::bit_cast<float>(bits));
}

inline nlohmann::json put_values(std::vector<std::uint8_t>& blob, const double* v, std::size_t n) {
  const std::size_t offset = blob.size();
  for (std::size_t i = 0; i < n; ++i) put_f32(blob, v[i]);
  return {{"offset", offset}, {"count", n}};
}

}  // namespace detail

inline SerializedModel serialize_model(const ModelGraph& g, const std::string& blob_name) {
  validate_graph(g);
  SerializedModel out;
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : g.layers) {
    nlohmann::json j{{"id", l.id}, {"name", l.name}, {"kind", layer_kind_name(l.kind)}};
    if (l.is_conv()) {
      j["d"] = l.d;
      j["stride"] = l.stride;
      j["padding"] = l.padding;
      j["c_in"] = l.c_in;
      j["c_out"] = l.c_out;
      j["groups"] = l.groups;
      j["weights"] = detail::put_values(out.blob, l.kernel.data().data(), l.kernel.size());
    } else if (l.kind == LayerKind::fc) {
      j["l_in"] = l.l_in;
      j["l_out"] = l.l_out;
      j["weights"] = detail::put_values(out.blob, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    } else if (l.kind == LayerKind::maxpool2d) {
      j["window"] = l.d;
      j["stride"] = l.stride;
    }
    if (l.bias) j["bias"] = detail::put_values(out.blob, l.bias->data(), static_cast<std::size_t>(l.bias->size()));
    layers.push_back(std::move(j));
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const DecomposedGroup& grp : g.groups) {
    groups.push_back({{"id", grp.id},
                      {"scheme", scheme_name(grp.scheme)},
                      {"members", grp.members},
                      {"ranks", grp.ranks},
                      {"orthonormal", grp.orthonormal},
                      {"source_id", grp.source_id},
                      {"source_name", grp.source_name},
                      {"source_kernel_params", grp.source_kernel_params},
                      {"source_macs", grp.source_macs}});
  }
  const nlohmann::json m{{"format", "musco-model"},
                         {"version", kManifestVersion},
                         {"input", {g.input.h, g.input.w, g.input.c}},
                         {"next_id", g.next_id},
                         {"layers", std::move(layers)},
                         {"groups", std::move(groups)},
                         {"blob", {{"file", blob_name}, {"bytes", out.blob.size()}, {"crc32", crc32_of(out.blob)}}}};
  out.manifest = m.dump(2) + "\n";
  return out;
}

inline ModelGraph deserialize_model(const std::string& manifest, const std::vector<std::uint8_t>& blob) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("corrupt manifest: ") + e.what());
  }
  try {
    if (m.at("format") != "musco-model") throw std::runtime_error("corrupt manifest: unknown format");
    if (m.at("version").get<int>() != kManifestVersion)
      throw std::runtime_error("corrupt manifest: unsupported version " + m.at("version").dump());
    const auto& b = m.at("blob");
    if (b.at("bytes").get<std::size_t>() != blob.size())
      throw std::runtime_error("weight blob has " + std::to_string(blob.size()) + " bytes, manifest says " +
                               b.at("bytes").dump());
    if (b.at("crc32").get<std::uint32_t>() != crc32_of(blob))
      throw std::runtime_error("weight blob checksum mismatch");

    ModelGraph g;
    const auto in = m.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw std::runtime_error("corrupt manifest: input shape needs 3 extents");
    g.input = {in[0], in[1], in[2]};
    g.next_id = m.at("next_id").get<std::size_t>();

    std::size_t cursor = 0;  // blob regions must be contiguous and in order
    auto take = [&](const nlohmann::json& ref, std::size_t expect, double* dst) {
      const auto offset = ref.at("offset").get<std::size_t>();
      const auto count = ref.at("count").get<std::size_t>();
      if (count != expect)
        throw std::runtime_error("corrupt manifest: region holds " + std::to_string(count) +
                                 " values, layer needs " + std::to_string(expect));
      if (offset != cursor || offset + 4 * count > blob.size())
        throw std::runtime_error("corrupt manifest: weight region at byte " + std::to_string(offset) +
                                 " overlaps or is out of bounds");
      for (std::size_t i = 0; i < count; ++i) dst[i] = detail::get_f32(blob, offset + 4 * i);
      cursor = offset + 4 * count;
    };

    for (const auto& j : m.at("layers")) {
      LayerSpec l;
      l.id = j.at("id").get<std::size_t>();
      l.name = j.at("name").get<std::string>();
      l.kind = parse_layer_kind(j.at("kind").get<std::string>());
      if (l.is_conv()) {
        l.d = j.at("d");
        l.stride = j.at("stride");
        l.padding = j.at("padding");
        l.c_in = j.at("c_in");
        l.c_out = j.at("c_out");
        l.groups = j.at("groups");
        if (l.groups < 1 || l.c_in % l.groups != 0)
          throw std::runtime_error("corrupt manifest: bad group count in layer '" + l.name + "'");
        l.kernel = DenseTensor({l.d, l.d, l.c_out, l.c_in / l.groups});
        take(j.at("weights"), l.kernel.size(), l.kernel.mutable_data().data());
      } else if (l.kind == LayerKind::fc) {
        l.l_in = j.at("l_in");
        l.l_out = j.at("l_out");
        l.weight.resize(static_cast<Eigen::Index>(l.l_in), static_cast<Eigen::Index>(l.l_out));
        take(j.at("weights"), l.l_in * l.l_out, l.weight.data());
      } else if (l.kind == LayerKind::maxpool2d) {
        l.d = j.at("window");
        l.stride = j.at("stride");
      }
      if (j.contains("bias")) {
        const std::size_t n = l.is_conv() ? l.c_out : l.l_out;
        l.bias = Vector(static_cast<Eigen::Index>(n));
        take(j.at("bias"), n, l.bias->data());
      }
      g.layers.push_back(std::move(l));
    }
    if (cursor != blob.size()) throw std::runtime_error("corrupt manifest: unreferenced bytes in weight blob");
    for (const auto& j : m.at("groups")) {
      DecomposedGroup grp;
      grp.id = j.at("id");
      grp.scheme = parse_scheme(j.at("scheme").get<std::string>());
      grp.members = j.at("members").get<std::vector<std::size_t>>();
      grp.ranks = j.at("ranks").get<std::vector<std::size_t>>();
      grp.orthonormal = j.at("orthonormal");
      grp.source_id = j.at("source_id");
      grp.source_name = j.at("source_name").get<std::string>();
      grp.source_kernel_params = j.at("source_kernel_params");
      grp.source_macs = j.at("source_macs");
      g.groups.push_back(std::move(grp));
    }
    for (const LayerSpec& l : g.layers)
      if (l.id >= g.next_id) throw std::runtime_error("corrupt manifest: layer id beyond next_id");
    try {
      validate_graph(g);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(std::string("corrupt manifest: ") + e.what());
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("corrupt manifest: ") + e.what());
  }
}

/// Blob path for a manifest: same stem, ".bin" extension.
inline std::string blob_path_for(const std::string& manifest_path) {
  std::filesystem::path p(manifest_path);
  p.replace_extension(".bin");
  return p.string();
}

inline void save_model(const ModelGraph& g, const std::string& manifest_path) {
  const std::string blob_path = blob_path_for(manifest_path);
  const SerializedModel s =
      serialize_model(g, std::filesystem::path(blob_path).filename().string());
  write_file_bytes(blob_path, s.blob);
  write_file_bytes(manifest_path, std::vector<std::uint8_t>(s.manifest.begin(), s.manifest.end()));
}

inline ModelGraph load_model(const std::string& manifest_path) {
  const auto text = read_file_bytes(manifest_path);
  const std::string manifest(text.begin(), text.end());
  std::string blob_file;
  try {
    blob_file = nlohmann::json::parse(manifest).at("blob").at("file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt manifest '" + manifest_path + "': " + e.what());
  }
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  return deserialize_model(manifest, read_file_bytes((dir / blob_file).string()));
}

}  // namespace musco

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

#include <cmath>
#include <cstdio>
#include <string>

#include <nlohmann/json.hpp>

#include "musco/model_graph.hpp"

namespace musco {

inline long mflops(std::size_t macs) { return std::lround(static_cast<double>(macs) / 1e6); }

/// Per-layer and per-group parameter and MAC table, machine-readable form.
inline nlohmann::json analyze_model(const ModelGraph& g) {
  const ModelCost c = count_costs(g);
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const LayerCost& lc = c.layers[i];
    const DecomposedGroup* grp = g.group_of(l.id);
    layers.push_back({{"name", l.name},
                      {"kind", layer_kind_name(l.kind)},
                      {"input", act_string(lc.in)},
                      {"output", act_string(lc.out)},
                      {"weights", lc.weights},
                      {"biases", lc.biases},
                      {"macs", lc.macs},
                      {"mflops", mflops(lc.macs)},
                      {"group", grp ? nlohmann::json(grp->source_name) : nlohmann::json(nullptr)}});
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const DecomposedGroup& grp : g.groups) {
    const GroupCost gc = group_cost(g, grp);
    nlohmann::json members = nlohmann::json::array();
    for (std::size_t id : grp.members) members.push_back(g.layer(id).name);
    groups.push_back({{"source", grp.source_name},
                      {"scheme", scheme_name(grp.scheme)},
                      {"ranks", grp.ranks},
                      {"members", members},
                      {"source_weights", grp.source_kernel_params},
                      {"weights", gc.weights},
                      {"param_ratio", static_cast<double>(grp.source_kernel_params) / static_cast<double>(gc.weights)},
                      {"source_macs", grp.source_macs},
                      {"macs", gc.macs},
                      {"flop_ratio", gc.macs ? static_cast<double>(grp.source_macs) / static_cast<double>(gc.macs) : 0.0}});
  }
  return {{"input", act_string(g.input)},
          {"layers", std::move(layers)},
          {"groups", std::move(groups)},
          {"totals", {{"weights", c.weights}, {"biases", c.biases}, {"params", c.params()},
                      {"macs", c.macs}, {"mflops", mflops(c.macs)}}}};
}

/// Human-readable rendering of analyze_model().
inline std::string format_analysis(const nlohmann::json& a) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %-16s %-14s %-14s %12s %8s %14s %8s\n", "layer", "kind",
                "input", "output", "weights", "biases", "MACs", "MFLOPs");
  out += line;
  for (const auto& l : a.at("layers")) {
    std::snprintf(line, sizeof line, "%-20s %-16s %-14s %-14s %12zu %8zu %14zu %8ld\n",
                  l.at("name").get<std::string>().c_str(), l.at("kind").get<std::string>().c_str(),
                  l.at("input").get<std::string>().c_str(), l.at("output").get<std::string>().c_str(),
                  l.at("weights").get<std::size_t>(), l.at("biases").get<std::size_t>(),
                  l.at("macs").get<std::size_t>(), l.at("mflops").get<long>());
    out += line;
  }
  const auto& t = a.at("totals");
  std::snprintf(line, sizeof line, "%-20s %-16s %-14s %-14s %12zu %8zu %14zu %8ld\n", "total", "", "", "",
                t.at("weights").get<std::size_t>(), t.at("biases").get<std::size_t>(),
                t.at("macs").get<std::size_t>(), t.at("mflops").get<long>());
  out += line;
  if (!a.at("groups").empty()) {
    out += "\ndecomposed layers\n";
    for (const auto& grp : a.at("groups")) {
      std::string ranks, members;
      for (const auto& r : grp.at("ranks")) ranks += (ranks.empty() ? "" : ",") + r.dump();
      for (const auto& m : grp.at("members")) members += (members.empty() ? "" : " ") + m.get<std::string>();
      std::snprintf(line, sizeof line, "%-20s %-8s ranks (%s)  weights %zu -> %zu (%.2fx)  MACs %zu -> %zu (%.2fx)\n",
                    grp.at("source").get<std::string>().c_str(), grp.at("scheme").get<std::string>().c_str(),
                    ranks.c_str(), grp.at("source_weights").get<std::size_t>(), grp.at("weights").get<std::size_t>(),
                    grp.at("param_ratio").get<double>(), grp.at("source_macs").get<std::size_t>(),
                    grp.at("macs").get<std::size_t>(), grp.at("flop_ratio").get<double>());
      out += line;
      out += "    members: " + members + "\n";
    }
  }
  return out;
}

}  // namespace musco

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

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "musco/driver.hpp"
#include "musco/evbmf.hpp"

namespace musco {

/// Everything `compress` needs: strategy, schedule, fine-tuning and paths.
struct RunConfig {
  MuscoConfig musco;
  std::string train_images, train_labels;
  std::string eval_images, eval_labels;
  std::string output_model = "compressed.json";
  std::string output_report = "report.json";
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path q(p);
  return q.is_absolute() ? p : (base / q).lexically_normal().string();
}

}  // namespace detail

/// Parses a config; relative paths are taken from `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  static const char* known[] = {"mode", "weakening", "alpha", "beta", "min_rank_guard", "steps",
                                "target_global_ratio", "layer_fraction", "conv_scheme", "fc_scheme",
                                "rank_stabilization_window", "finetune", "train_images",
                                "train_labels", "eval_images", "eval_labels", "output_model",
                                "output_report", "seed", "cp_restarts", "cp_max_sweeps"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
        std::end(known))
      throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  RunConfig rc;
  MuscoConfig& c = rc.musco;
  try {
    std::string mode = "constant_rate";
    detail::read_opt(j, "mode", mode);
    if (mode == "constant_rate" || mode == "nx")
      c.strategy.mode = RankStrategy::Mode::constant_rate;
    else if (mode == "bayesian" || mode == "vbmf")
      c.strategy.mode = RankStrategy::Mode::bayesian;
    else
      throw std::invalid_argument("config: unknown mode '" + mode + "'");
    detail::read_opt(j, "weakening", c.strategy.weakening);
    detail::read_opt(j, "alpha", c.strategy.alpha);
    detail::read_opt(j, "beta", c.strategy.beta);
    detail::read_opt(j, "min_rank_guard", c.strategy.min_rank_guard);
    detail::read_opt(j, "steps", c.steps);
    if (j.contains("target_global_ratio") && !j.at("target_global_ratio").is_null())
      c.target_global_ratio = j.at("target_global_ratio").get<double>();
    detail::read_opt(j, "layer_fraction", c.layer_fraction);
    if (j.contains("conv_scheme")) c.conv_scheme = parse_scheme(j.at("conv_scheme").get<std::string>());
    if (j.contains("fc_scheme")) {
      const auto fc = j.at("fc_scheme").get<std::string>();
      if (fc != "svd" && fc != "skip") throw std::invalid_argument("config: fc_scheme must be svd or skip");
      c.compress_fc = fc == "svd";
    }
    detail::read_opt(j, "rank_stabilization_window", c.rank_stabilization_window);
    detail::read_opt(j, "cp_restarts", c.cp.restarts);
    detail::read_opt(j, "cp_max_sweeps", c.cp.max_sweeps);
    if (j.contains("seed")) {
      c.finetune.seed = j.at("seed").get<std::uint64_t>();
      c.cp.seed = c.finetune.seed;
    }
    if (j.contains("finetune")) {
      const auto& f = j.at("finetune");
      detail::read_opt(f, "learning_rate", c.finetune.learning_rate);
      detail::read_opt(f, "momentum", c.finetune.momentum);
      detail::read_opt(f, "epochs", c.finetune.epochs);
      detail::read_opt(f, "batch_size", c.finetune.batch_size);
      detail::read_opt(f, "weight_decay", c.finetune.weight_decay);
      detail::read_opt(f, "patience", c.finetune.patience);
    }
    for (auto [key, dst] : {std::pair{"train_images", &rc.train_images}, {"train_labels", &rc.train_labels},
                            {"eval_images", &rc.eval_images}, {"eval_labels", &rc.eval_labels},
                            {"output_model", &rc.output_model}, {"output_report", &rc.output_report}}) {
      detail::read_opt(j, key, *dst);
      *dst = detail::resolve(base_dir, *dst);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config '" + path + "': " + e.what());
  }
  return parse_run_config(j, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Report.

inline nlohmann::json history_to_json(const TrainHistory& h) {
  return {{"train_loss", h.train_loss},       {"train_accuracy", h.train_accuracy},
          {"eval_loss", h.eval_loss},         {"eval_accuracy", h.eval_accuracy},
          {"best_epoch", h.best_epoch},       {"stopped_early", h.stopped_early}};
}

inline nlohmann::json report_to_json(const CompressionReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json its = nlohmann::json::array();
  for (const IterationRecord& it : r.iterations) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerRecord& l : it.layers) {
      layers.push_back({{"layer", l.layer},
                        {"scheme", scheme_name(l.scheme)},
                        {"action", l.action},
                        {"reason", l.reason},
                        {"ranks_before", l.ranks_before},
                        {"ranks_after", l.ranks_after},
                        {"extreme_ranks", l.extreme},
                        {"params_before", l.params_before},
                        {"params_after", l.params_after},
                        {"macs_before", l.macs_before},
                        {"macs_after", l.macs_after},
                        {"rel_error", l.rel_error}});
    }
    its.push_back({{"index", it.index},
                   {"layers", std::move(layers)},
                   {"params_before", it.params_before},
                   {"params_after", it.params_after},
                   {"macs_before", it.macs_before},
                   {"macs_after", it.macs_after},
                   {"accuracy_before_finetune", opt(it.accuracy_before_finetune)},
                   {"accuracy_after_finetune", opt(it.accuracy_after_finetune)},
                   {"changed", it.changed},
                   {"finetune", history_to_json(it.finetune)}});
  }
  return {{"run", r.run_name},
          {"stop_reason", r.stop_reason},
          {"original_params", r.original_params},
          {"final_params", r.final_params},
          {"original_macs", r.original_macs},
          {"final_macs", r.final_macs},
          {"global_param_ratio", r.global_param_ratio()},
          {"global_flop_ratio", r.global_flop_ratio()},
          {"compressed_layer_kernel_ratio", r.compressed_layer_ratio()},
          {"baseline_accuracy", opt(r.baseline_accuracy)},
          {"final_accuracy", opt(r.final_accuracy)},
          {"rank_history", r.rank_history},
          {"iterations", std::move(its)}};
}

// ---------------------------------------------------------------------------
// Plain-text matrices: "rows cols" followed by the entries row by row.

inline Matrix2 read_matrix_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matrix file '" + path + "'");
  long rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows < 1 || cols < 1)
    throw std::runtime_error("matrix file '" + path + "': bad header");
  Matrix2 m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j)
      if (!(in >> m(i, j)))
        throw std::runtime_error("matrix file '" + path + "': expected " + std::to_string(rows * cols) +
                                 " values, got " + std::to_string(i * cols + j));
  return m;
}

inline void write_matrix_text(const std::string& path, const Matrix2& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << m.rows() << ' ' << m.cols() << '\n';
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
    out << '\n';
  }
}

inline nlohmann::json evbmf_to_json(const EVBMFEstimate& e) {
  return {{"rank", e.rank},
          {"noise_variance", e.noise_variance},
          {"threshold", e.threshold},
          {"retained_singular_values", e.retained_singular_values},
          {"shrunk_singular_values", e.shrunk_singular_values},
          {"degenerate", e.degenerate}};
}

}  // namespace musco

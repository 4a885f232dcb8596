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
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "musco/cpd3.hpp"
#include "musco/dataset.hpp"
#include "musco/model_graph.hpp"
#include "musco/rank_select.hpp"
#include "musco/svd_factors.hpp"
#include "musco/trainer.hpp"
#include "musco/tucker2.hpp"

namespace musco {

struct MuscoConfig {
  RankStrategy strategy;
  Scheme conv_scheme = Scheme::tucker2;  // tucker2 or cpd3
  bool compress_fc = true;               // fc layers: svd, or left alone
  std::size_t steps = 2;
  std::optional<double> target_global_ratio;
  double layer_fraction = 1.0;
  TrainConfig finetune{.learning_rate = 0.001};  // factorized chains need a smaller step
  std::size_t rank_stabilization_window = 2;
  Tucker2Options tucker;
  CPOptions cp;

  void validate() const {
    strategy.validate();
    finetune.validate();
    if (steps < 1) throw std::invalid_argument("MuscoConfig: steps must be >= 1");
    if (!(layer_fraction > 0.0 && layer_fraction <= 1.0))
      throw std::invalid_argument("MuscoConfig: layer_fraction outside (0, 1]");
    if (conv_scheme == Scheme::svd)
      throw std::invalid_argument("MuscoConfig: conv layers need tucker2 or cpd3");
    if (rank_stabilization_window < 1)
      throw std::invalid_argument("MuscoConfig: rank_stabilization_window < 1");
    if (target_global_ratio && !(*target_global_ratio > 0.0))
      throw std::invalid_argument("MuscoConfig: target_global_ratio must be > 0");
  }
};

/// "MUSCO(nx, 2, 2)" or "MUSCO(vbmf, 0.7, 2)".
inline std::string run_name(const MuscoConfig& cfg) {
  std::ostringstream os;
  if (cfg.strategy.mode == RankStrategy::Mode::constant_rate)
    os << "MUSCO(nx, " << cfg.strategy.alpha << ", " << cfg.steps << ")";
  else
    os << "MUSCO(vbmf, " << cfg.strategy.weakening << ", " << cfg.steps << ")";
  return os.str();
}

struct LayerRecord {
  std::string layer;  // name of the original layer
  std::size_t source_id = 0;
  Scheme scheme = Scheme::tucker2;
  std::string action;  // decompose, recompress, unchanged, skip
  std::string reason;  // why skipped
  std::vector<std::size_t> ranks_before, ranks_after, extreme;
  std::size_t params_before = 0, params_after = 0;  // kernel weights of the layer or group
  std::size_t macs_before = 0, macs_after = 0;
  double rel_error = 0.0;  // new weights against the previous ones
};

struct IterationRecord {
  std::size_t index = 0;
  std::vector<LayerRecord> layers;
  std::size_t params_before = 0, params_after = 0;  // whole model, weights + biases
  std::size_t macs_before = 0, macs_after = 0;
  std::optional<double> accuracy_before_finetune, accuracy_after_finetune;
  TrainHistory finetune;
  bool changed = false;
};

struct CompressionReport {
  std::string run_name;
  std::size_t original_params = 0, final_params = 0;
  std::size_t original_macs = 0, final_macs = 0;
  std::size_t source_kernel_params = 0, compressed_kernel_params = 0;  // decomposed layers only
  std::optional<double> baseline_accuracy, final_accuracy;
  std::vector<IterationRecord> iterations;
  std::map<std::string, std::vector<std::vector<std::size_t>>> rank_history;
  std::string stop_reason;

  double global_param_ratio() const {
    return final_params ? static_cast<double>(original_params) / static_cast<double>(final_params) : 0.0;
  }
  double global_flop_ratio() const {
    return final_macs ? static_cast<double>(original_macs) / static_cast<double>(final_macs) : 0.0;
  }
  double compressed_layer_ratio() const {
    return compressed_kernel_params ? static_cast<double>(source_kernel_params) /
                                          static_cast<double>(compressed_kernel_params)
                                    : 1.0;
  }
};

/// A layer the loop may compress: an original conv/fc layer or a group.
struct CompressionUnit {
  std::string name;
  std::size_t source_id = 0;
  std::optional<std::size_t> group_id;
  std::size_t layer_id = 0;  // dense layers
};

inline std::vector<CompressionUnit> compression_units(const ModelGraph& g, const MuscoConfig& cfg) {
  std::vector<CompressionUnit> units;
  for (const LayerSpec& l : g.layers) {
    if (const DecomposedGroup* grp = g.group_of(l.id)) {
      if (grp->members.front() == l.id) units.push_back({grp->source_name, grp->source_id, grp->id, 0});
      continue;
    }
    if (l.kind == LayerKind::conv2d || (l.kind == LayerKind::fc && cfg.compress_fc))
      units.push_back({l.name, l.id, std::nullopt, l.id});
  }
  return units;
}

/// Unit indices compressed in iteration k: a sliding block of
/// layer_fraction * U units, wrapping around the layer list.
inline std::vector<std::size_t> scheduled_units(std::size_t unit_count, double layer_fraction,
                                                std::size_t k) {
  std::vector<std::size_t> out;
  if (unit_count == 0) return out;
  if (layer_fraction >= 1.0) {
    for (std::size_t i = 0; i < unit_count; ++i) out.push_back(i);
    return out;
  }
  const double per = layer_fraction * static_cast<double>(unit_count);
  const auto begin = static_cast<std::size_t>(std::floor(static_cast<double>(k) * per + 1e-9));
  const auto end = static_cast<std::size_t>(std::floor(static_cast<double>(k + 1) * per + 1e-9));
  for (std::size_t i = begin; i < end && i < begin + unit_count; ++i) out.push_back(i % unit_count);
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

inline std::vector<std::size_t> current_ranks(const LayerState& s) {
  if (std::holds_alternative<DenseConvState>(s) || std::holds_alternative<DenseFcState>(s)) return {};
  return ranks_of(s);
}

inline double state_rel_error(const LayerState& before, const LayerState& after) {
  auto dense = [](const LayerState& s) -> DenseTensor {
    if (const auto* c = std::get_if<DenseConvState>(&s)) return c->kernel.tensor();
    if (const auto* f = std::get_if<DenseFcState>(&s))
      return DenseTensor({static_cast<std::size_t>(f->weight.rows()), static_cast<std::size_t>(f->weight.cols())},
                         std::vector<double>(f->weight.data(), f->weight.data() + f->weight.size()));
    if (const auto* t = std::get_if<Tucker2Factors>(&s)) return tucker2_reconstruct(*t).tensor();
    if (const auto* c = std::get_if<CPFactors>(&s)) {
      const Kernel4 k = unreshape_kernel(cpd3_reconstruct(*c));
      return k.tensor();
    }
    const Matrix2 m = std::get<SVDFactors>(s).product();
    return DenseTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                       std::vector<double>(m.data(), m.data() + m.size()));
  };
  return rel_error(dense(before), dense(after));
}

inline std::size_t unit_weights(const ModelGraph& g, const CompressionUnit& u) {
  if (u.group_id) return group_cost(g, g.group(*u.group_id)).weights;
  return g.layer(u.layer_id).weight_count();
}

inline std::size_t unit_macs(const ModelGraph& g, const CompressionUnit& u) {
  if (u.group_id) return group_cost(g, g.group(*u.group_id)).macs;
  const ModelCost c = count_costs(g);
  return c.layers[g.index_of(u.layer_id)].macs;
}

}  // namespace detail

/// Factorizes a dense layer at the given ranks and substitutes it.
inline ModelGraph decompose_layer(const ModelGraph& g, std::size_t layer_id, Scheme scheme,
                                  const std::vector<std::size_t>& ranks, const MuscoConfig& cfg,
                                  LayerState* factors_out = nullptr) {
  const LayerSpec& l = g.layer(layer_id);
  if (l.kind == LayerKind::fc) {
    SVDFactors f = svd_decompose(l.weight, ranks.at(0));
    if (factors_out) *factors_out = f;
    return substitute_fc_svd(g, layer_id, f);
  }
  const Kernel4 k(l.kernel);
  if (scheme == Scheme::tucker2) {
    Tucker2Factors f = tucker2_decompose(k, {ranks.at(0), ranks.at(1)}, cfg.tucker);
    if (factors_out) *factors_out = f;
    return substitute_conv_tucker2(g, layer_id, f);
  }
  CPFactors f = cpd3_decompose(reshape_kernel(k), ranks.at(0), cfg.cp);
  if (factors_out) *factors_out = f;
  return substitute_conv_cpd3(g, layer_id, f);
}

struct IterationResult {
  ModelGraph graph;
  IterationRecord record;
};

/// One compression pass over the scheduled units: dense layers are
/// factorized, groups are recompressed from their factors in place.
inline IterationResult one_iteration(const ModelGraph& model, const MuscoConfig& cfg,
                                     std::size_t iteration_index) {
  cfg.validate();
  IterationResult res{model, {}};
  IterationRecord& rec = res.record;
  rec.index = iteration_index;
  const ModelCost before = count_costs(model);
  rec.params_before = before.params();
  rec.macs_before = before.macs;

  const auto units = compression_units(model, cfg);
  for (std::size_t ui : scheduled_units(units.size(), cfg.layer_fraction, iteration_index)) {
    const CompressionUnit& u = units[ui];
    ModelGraph& g = res.graph;
    LayerRecord lr;
    lr.layer = u.name;
    lr.source_id = u.source_id;
    lr.params_before = detail::unit_weights(g, u);
    lr.macs_before = detail::unit_macs(g, u);

    LayerState state;
    if (u.group_id) {
      state = group_factors(g, g.group(*u.group_id));
    } else {
      const LayerSpec& l = g.layer(u.layer_id);
      if (l.kind == LayerKind::fc)
        state = DenseFcState{l.weight};
      else
        state = DenseConvState{Kernel4(l.kernel), cfg.conv_scheme};
    }
    lr.ranks_before = detail::current_ranks(state);
    const RankProposal p = select_ranks(state, cfg.strategy);
    lr.scheme = p.scheme;
    lr.extreme = p.extreme;
    if (p.skip) {
      lr.action = "skip";
      lr.reason = p.reason;
      lr.ranks_after = lr.ranks_before;
    } else if (!u.group_id) {
      LayerState factors;
      g = decompose_layer(g, u.layer_id, p.scheme, p.ranks(), cfg, &factors);
      lr.action = "decompose";
      lr.ranks_after = p.ranks();
      lr.rel_error = detail::state_rel_error(state, factors);
      rec.changed = true;
    } else if (p.ranks() == lr.ranks_before) {
      lr.action = "unchanged";
      lr.ranks_after = lr.ranks_before;
    } else {
      LayerState next;
      if (const auto* t = std::get_if<Tucker2Factors>(&state))
        next = tucker2_recompress(*t, p.tucker, cfg.tucker);
      else if (const auto* c = std::get_if<CPFactors>(&state))
        next = cpd3_recompress(*c, p.rank, cfg.cp);
      else
        next = svd_recompress(std::get<SVDFactors>(state), p.rank);
      g = update_group_weights(g, *u.group_id, next);
      lr.action = "recompress";
      lr.ranks_after = p.ranks();
      lr.rel_error = detail::state_rel_error(state, next);
      rec.changed = true;
    }

    // Dense layers become groups; find the unit again under its new identity.
    CompressionUnit now = u;
    for (const auto& grp : g.groups)
      if (grp.source_id == u.source_id) now.group_id = grp.id;
    lr.params_after = detail::unit_weights(g, now);
    lr.macs_after = detail::unit_macs(g, now);
    rec.layers.push_back(std::move(lr));
  }
  const ModelCost after = count_costs(res.graph);
  rec.params_after = after.params();
  rec.macs_after = after.macs;
  return res;
}

struct StopDecision {
  bool stop = false;
  std::string reason;
};

inline StopDecision check_stop(const CompressionReport& report, const MuscoConfig& cfg) {
  if (report.iterations.empty()) return {};
  if (cfg.target_global_ratio && report.global_param_ratio() >= *cfg.target_global_ratio)
    return {true, "ratio_reached"};
  const std::size_t w = cfg.rank_stabilization_window;
  if (report.iterations.size() >= w &&
      std::none_of(report.iterations.end() - static_cast<std::ptrdiff_t>(w), report.iterations.end(),
                   [](const IterationRecord& r) { return r.changed; }))
    return {true, "ranks_stabilized"};
  if (report.iterations.size() >= cfg.steps) return {true, "max_steps"};
  return {};
}

struct MuscoResult {
  ModelGraph graph;
  CompressionReport report;
};

inline void refresh_totals(CompressionReport& r, const ModelGraph& g) {
  const ModelCost c = count_costs(g);
  r.final_params = c.params();
  r.final_macs = c.macs;
  r.source_kernel_params = r.compressed_kernel_params = 0;
  for (const auto& grp : g.groups) {
    r.source_kernel_params += grp.source_kernel_params;
    r.compressed_kernel_params += group_cost(g, grp).weights;
  }
}

/// The multi-stage loop: select ranks, compress or recompress the scheduled
/// layers, fine-tune, repeat until a stop criterion fires.
inline MuscoResult musco_run(const ModelGraph& model, const Dataset& train, const Dataset& eval,
                             const MuscoConfig& cfg) {
  cfg.validate();
  MuscoResult res{model, {}};
  CompressionReport& rep = res.report;
  rep.run_name = run_name(cfg);
  const ModelCost base = count_costs(model);
  rep.original_params = base.params();
  rep.original_macs = base.macs;
  refresh_totals(rep, model);
  const bool has_eval = eval.size() > 0;
  if (has_eval) rep.baseline_accuracy = rep.final_accuracy = evaluate(model, eval).accuracy;

  if (cfg.target_global_ratio && rep.global_param_ratio() >= *cfg.target_global_ratio) {
    rep.stop_reason = "ratio_reached";
    return res;
  }
  for (std::size_t k = 0;; ++k) {
    IterationResult it = one_iteration(res.graph, cfg, k);
    if (has_eval) it.record.accuracy_before_finetune = evaluate(it.graph, eval).accuracy;
    if (it.record.changed && cfg.finetune.epochs > 0) {
      TrainConfig tc = cfg.finetune;
      tc.seed = cfg.finetune.seed + k;
      FineTuneResult ft = fine_tune(it.graph, train, eval, tc);
      it.graph = std::move(ft.graph);
      it.record.finetune = std::move(ft.history);
    }
    if (has_eval) {
      it.record.accuracy_after_finetune = evaluate(it.graph, eval).accuracy;
      rep.final_accuracy = it.record.accuracy_after_finetune;
    }
    for (const LayerRecord& lr : it.record.layers)
      if (!lr.ranks_after.empty()) rep.rank_history[lr.layer].push_back(lr.ranks_after);
    res.graph = std::move(it.graph);
    rep.iterations.push_back(std::move(it.record));
    refresh_totals(rep, res.graph);
    const StopDecision s = check_stop(rep, cfg);
    if (s.stop) {
      rep.stop_reason = s.reason;
      break;
    }
  }
  return res;
}

}  // namespace musco

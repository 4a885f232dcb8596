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
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "musco/cpd3.hpp"
#include "musco/rank_select.hpp"
#include "musco/svd_factors.hpp"
#include "musco/tensor.hpp"
#include "musco/tucker2.hpp"

namespace musco {

enum class LayerKind { conv2d, grouped_conv2d, fc, relu, maxpool2d, flatten, softmax_xent_head };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::grouped_conv2d: return "grouped_conv2d";
    case LayerKind::fc: return "fc";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::softmax_xent_head: return "softmax_xent_head";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  for (LayerKind k : {LayerKind::conv2d, LayerKind::grouped_conv2d, LayerKind::fc,
                      LayerKind::relu, LayerKind::maxpool2d, LayerKind::flatten,
                      LayerKind::softmax_xent_head}) {
    if (s == layer_kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + s + "'");
}

/// Activation shape. Flat activations (after flatten or fc) have h = w = 1.
struct ActShape {
  std::size_t h = 1, w = 1, c = 1;

  std::size_t size() const { return h * w * c; }
  friend bool operator==(const ActShape&, const ActShape&) = default;
};

inline std::string act_string(const ActShape& s) {
  return std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
}

struct LayerSpec {
  std::size_t id = 0;
  std::string name;
  LayerKind kind = LayerKind::relu;

  // conv2d / grouped_conv2d; maxpool2d uses d as window and stride
  std::size_t d = 1, stride = 1, padding = 0;
  std::size_t c_in = 0, c_out = 0, groups = 1;
  DenseTensor kernel;  // d x d x C_out x (C_in / groups)

  // fc: y = x W + b
  std::size_t l_in = 0, l_out = 0;
  Matrix2 weight;  // l_in x l_out

  std::optional<Vector> bias;

  bool is_conv() const { return kind == LayerKind::conv2d || kind == LayerKind::grouped_conv2d; }
  bool has_weights() const { return is_conv() || kind == LayerKind::fc; }

  std::size_t weight_count() const {
    if (is_conv()) return kernel.size();
    if (kind == LayerKind::fc) return static_cast<std::size_t>(weight.size());
    return 0;
  }
  std::size_t bias_count() const { return bias ? static_cast<std::size_t>(bias->size()) : 0; }

  void validate() const {
    const std::string who = "layer '" + name + "' (" + layer_kind_name(kind) + ")";
    if (is_conv()) {
      if (d < 1 || stride < 1 || c_in < 1 || c_out < 1 || groups < 1)
        throw std::invalid_argument(who + ": zero conv hyperparameter");
      if (kind == LayerKind::grouped_conv2d && !(c_in == c_out && c_in == groups))
        throw std::invalid_argument(who + ": grouped conv must be depthwise");
      if (kind == LayerKind::conv2d && groups != 1)
        throw std::invalid_argument(who + ": plain conv with groups != 1");
      const Shape want{d, d, c_out, c_in / groups};
      if (kernel.shape() != want)
        throw std::invalid_argument(who + ": kernel " + shape_string(kernel.shape()) +
                                    ", expected " + shape_string(want));
      if (bias && static_cast<std::size_t>(bias->size()) != c_out)
        throw std::invalid_argument(who + ": bias length mismatch");
    } else if (kind == LayerKind::fc) {
      if (static_cast<std::size_t>(weight.rows()) != l_in ||
          static_cast<std::size_t>(weight.cols()) != l_out || l_in < 1 || l_out < 1)
        throw std::invalid_argument(who + ": weight shape mismatch");
      if (bias && static_cast<std::size_t>(bias->size()) != l_out)
        throw std::invalid_argument(who + ": bias length mismatch");
    } else if (kind == LayerKind::maxpool2d) {
      if (d < 1 || stride < 1) throw std::invalid_argument(who + ": zero pool window");
    }
  }
};

/// Contiguous run of layers that replaced one original layer.
struct DecomposedGroup {
  std::size_t id = 0;
  Scheme scheme = Scheme::tucker2;
  std::vector<std::size_t> members;  // layer ids, in order
  std::vector<std::size_t> ranks;    // (r_out, r_in) for tucker2, (R) otherwise
  bool orthonormal = false;          // tucker2 only
  std::size_t source_id = 0;
  std::string source_name;
  std::size_t source_kernel_params = 0;
  std::size_t source_macs = 0;
};

struct ModelGraph {
  ActShape input;
  std::vector<LayerSpec> layers;
  std::vector<DecomposedGroup> groups;
  std::size_t next_id = 0;

  std::size_t add(LayerSpec layer) {
    layer.id = next_id++;
    if (layer.name.empty()) layer.name = std::string(layer_kind_name(layer.kind)) + std::to_string(layer.id);
    layers.push_back(std::move(layer));
    return layers.back().id;
  }

  std::size_t index_of(std::size_t layer_id) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].id == layer_id) return i;
    throw std::out_of_range("no layer with id " + std::to_string(layer_id));
  }
  const LayerSpec& layer(std::size_t layer_id) const { return layers[index_of(layer_id)]; }
  LayerSpec& layer(std::size_t layer_id) { return layers[index_of(layer_id)]; }

  const DecomposedGroup* group_of(std::size_t layer_id) const {
    for (const auto& g : groups)
      if (std::find(g.members.begin(), g.members.end(), layer_id) != g.members.end()) return &g;
    return nullptr;
  }
  std::size_t group_index(std::size_t group_id) const {
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i].id == group_id) return i;
    throw std::out_of_range("no group with id " + std::to_string(group_id));
  }
  const DecomposedGroup& group(std::size_t group_id) const { return groups[group_index(group_id)]; }
};

// ---------------------------------------------------------------------------
// Layer constructors.

inline LayerSpec make_conv(std::string name, std::size_t c_in, std::size_t c_out, std::size_t d,
                           std::size_t stride = 1, std::size_t padding = 0, bool bias = true) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::conv2d;
  l.d = d;
  l.stride = stride;
  l.padding = padding;
  l.c_in = c_in;
  l.c_out = c_out;
  l.kernel = DenseTensor({d, d, c_out, c_in});
  if (bias) l.bias = Vector::Zero(static_cast<Eigen::Index>(c_out));
  return l;
}

inline LayerSpec make_depthwise(std::string name, std::size_t channels, std::size_t d,
                                std::size_t stride = 1, std::size_t padding = 0) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::grouped_conv2d;
  l.d = d;
  l.stride = stride;
  l.padding = padding;
  l.c_in = l.c_out = l.groups = channels;
  l.kernel = DenseTensor({d, d, channels, 1});
  return l;
}

inline LayerSpec make_fc(std::string name, std::size_t l_in, std::size_t l_out, bool bias = true) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::fc;
  l.l_in = l_in;
  l.l_out = l_out;
  l.weight = Matrix2::Zero(static_cast<Eigen::Index>(l_in), static_cast<Eigen::Index>(l_out));
  if (bias) l.bias = Vector::Zero(static_cast<Eigen::Index>(l_out));
  return l;
}

inline LayerSpec make_simple(std::string name, LayerKind kind) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  return l;
}

inline LayerSpec make_maxpool(std::string name, std::size_t window = 2, std::size_t stride = 2) {
  LayerSpec l = make_simple(std::move(name), LayerKind::maxpool2d);
  l.d = window;
  l.stride = stride;
  return l;
}

// ---------------------------------------------------------------------------
// Shape inference.

inline ActShape output_shape(const LayerSpec& l, const ActShape& in) {
  auto spatial = [&](std::size_t n, std::size_t pad) -> std::size_t {
    if (n + 2 * pad < l.d)
      throw std::invalid_argument("layer '" + l.name + "': window " + std::to_string(l.d) +
                                  " larger than padded input " + act_string(in));
    return (n + 2 * pad - l.d) / l.stride + 1;
  };
  switch (l.kind) {
    case LayerKind::conv2d:
    case LayerKind::grouped_conv2d:
      if (in.c != l.c_in)
        throw std::invalid_argument("layer '" + l.name + "': expects " + std::to_string(l.c_in) +
                                    " channels, input is " + act_string(in));
      return {spatial(in.h, l.padding), spatial(in.w, l.padding), l.c_out};
    case LayerKind::maxpool2d:
      return {spatial(in.h, 0), spatial(in.w, 0), in.c};
    case LayerKind::flatten:
      return {1, 1, in.size()};
    case LayerKind::fc:
      if (in.h != 1 || in.w != 1 || in.c != l.l_in)
        throw std::invalid_argument("layer '" + l.name + "': expects flat " +
                                    std::to_string(l.l_in) + " features, input is " +
                                    act_string(in));
      return {1, 1, l.l_out};
    case LayerKind::relu:
    case LayerKind::softmax_xent_head:
      return in;
  }
  return in;
}

/// Shape of the input to each layer followed by the final output shape
/// (layers.size() + 1 entries).
inline std::vector<ActShape> infer_shapes(const ModelGraph& g) {
  std::vector<ActShape> shapes{g.input};
  for (const LayerSpec& l : g.layers) {
    l.validate();
    shapes.push_back(output_shape(l, shapes.back()));
  }
  return shapes;
}

/// Structural checks: shapes, unique ids, contiguous groups.
inline void validate_graph(const ModelGraph& g) {
  infer_shapes(g);
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    for (std::size_t j = i + 1; j < g.layers.size(); ++j)
      if (g.layers[i].id == g.layers[j].id)
        throw std::invalid_argument("duplicate layer id " + std::to_string(g.layers[i].id));
  for (const auto& grp : g.groups) {
    const std::size_t want = grp.scheme == Scheme::svd ? 2 : 3;
    if (grp.members.size() != want)
      throw std::invalid_argument("group " + std::to_string(grp.id) + ": wrong member count");
    const std::size_t first = g.index_of(grp.members.front());
    for (std::size_t k = 1; k < grp.members.size(); ++k)
      if (g.index_of(grp.members[k]) != first + k)
        throw std::invalid_argument("group " + std::to_string(grp.id) + ": members not contiguous");
  }
}

// ---------------------------------------------------------------------------
// Accounting. One multiply-accumulate counts as one FLOP.

struct LayerCost {
  std::size_t layer_id = 0;
  std::size_t weights = 0;
  std::size_t biases = 0;
  std::size_t macs = 0;
  ActShape in, out;
};

struct ModelCost {
  std::vector<LayerCost> layers;
  std::size_t weights = 0, biases = 0, macs = 0;

  std::size_t params() const { return weights + biases; }
};

inline std::size_t layer_macs(const LayerSpec& l, const ActShape& out) {
  if (l.is_conv()) return l.d * l.d * (l.c_in / l.groups) * l.c_out * out.h * out.w;
  if (l.kind == LayerKind::fc) return l.l_in * l.l_out;
  return 0;
}

inline ModelCost count_costs(const ModelGraph& g) {
  const auto shapes = infer_shapes(g);
  ModelCost c;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    LayerCost lc{l.id, l.weight_count(), l.bias_count(), layer_macs(l, shapes[i + 1]),
                 shapes[i], shapes[i + 1]};
    c.weights += lc.weights;
    c.biases += lc.biases;
    c.macs += lc.macs;
    c.layers.push_back(lc);
  }
  return c;
}

struct ParamCount {
  std::size_t weights = 0, biases = 0;
  std::size_t total() const { return weights + biases; }
};

inline ParamCount count_params(const ModelGraph& g) {
  ParamCount p;
  for (const LayerSpec& l : g.layers) {
    p.weights += l.weight_count();
    p.biases += l.bias_count();
  }
  return p;
}

inline std::size_t count_flops(const ModelGraph& g) { return count_costs(g).macs; }

/// Kernel parameters and MACs of a group's members.
struct GroupCost {
  std::size_t weights = 0;
  std::size_t macs = 0;
};

inline GroupCost group_cost(const ModelGraph& g, const DecomposedGroup& grp) {
  const ModelCost c = count_costs(g);
  GroupCost out;
  for (std::size_t id : grp.members) {
    const auto i = g.index_of(id);
    out.weights += c.layers[i].weights;
    out.macs += c.layers[i].macs;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Substitution.

namespace detail {

inline void require_free_layer(const ModelGraph& g, std::size_t layer_id, LayerKind kind,
                               const char* who) {
  const LayerSpec& l = g.layer(layer_id);
  if (l.kind != kind)
    throw std::invalid_argument(std::string(who) + ": layer '" + l.name + "' is " +
                                layer_kind_name(l.kind) + ", expected " + layer_kind_name(kind));
  if (g.group_of(layer_id) != nullptr)
    throw std::invalid_argument(std::string(who) + ": layer '" + l.name +
                                "' is already part of a decomposed group");
}

// 1x1 conv whose kernel(0, 0, o, i) = m(o, i).
inline DenseTensor pointwise_kernel(const Matrix2& m) {
  const auto co = static_cast<std::size_t>(m.rows()), ci = static_cast<std::size_t>(m.cols());
  DenseTensor k({1, 1, co, ci});
  for (std::size_t i = 0; i < ci; ++i)
    for (std::size_t o = 0; o < co; ++o)
      k(0, 0, o, i) = m(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i));
  return k;
}

inline Matrix2 pointwise_matrix(const DenseTensor& k) {
  Matrix2 m(static_cast<Eigen::Index>(k.extent(2)), static_cast<Eigen::Index>(k.extent(3)));
  for (std::size_t i = 0; i < k.extent(3); ++i)
    for (std::size_t o = 0; o < k.extent(2); ++o)
      m(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) = k(0, 0, o, i);
  return m;
}

// Depthwise d x d x R x 1 filters from the columns of the d^2 x R spatial factor.
inline DenseTensor depthwise_kernel(const Matrix2& spatial, std::size_t d) {
  const auto r = static_cast<std::size_t>(spatial.cols());
  DenseTensor k({d, d, r, 1});
  for (std::size_t c = 0; c < r; ++c)
    for (std::size_t w = 0; w < d; ++w)
      for (std::size_t h = 0; h < d; ++h)
        k(h, w, c, 0) = spatial(static_cast<Eigen::Index>(h + d * w), static_cast<Eigen::Index>(c));
  return k;
}

inline Matrix2 spatial_matrix(const DenseTensor& k) {
  const std::size_t d = k.extent(0), r = k.extent(2);
  Matrix2 m(static_cast<Eigen::Index>(d * d), static_cast<Eigen::Index>(r));
  for (std::size_t c = 0; c < r; ++c)
    for (std::size_t w = 0; w < d; ++w)
      for (std::size_t h = 0; h < d; ++h)
        m(static_cast<Eigen::Index>(h + d * w), static_cast<Eigen::Index>(c)) = k(h, w, c, 0);
  return m;
}

inline std::vector<LayerSpec> tucker2_members(const LayerSpec& src, const Tucker2Factors& f) {
  const MultilinearRank2 r = f.rank();
  LayerSpec first = make_conv(src.name + ".in", src.c_in, r.r_in, 1, 1, 0, false);
  first.kernel = pointwise_kernel(f.factor_in.transpose());
  LayerSpec mid = make_conv(src.name + ".core", r.r_in, r.r_out, src.d, src.stride, src.padding, false);
  mid.kernel = f.core;
  LayerSpec last = make_conv(src.name + ".out", r.r_out, src.c_out, 1, 1, 0, false);
  last.kernel = pointwise_kernel(f.factor_out);
  last.bias = src.bias;
  return {std::move(first), std::move(mid), std::move(last)};
}

inline std::vector<LayerSpec> cpd3_members(const LayerSpec& src, const CPFactors& f) {
  const std::size_t r = f.cp_rank();
  LayerSpec first = make_conv(src.name + ".in", src.c_in, r, 1, 1, 0, false);
  first.kernel = pointwise_kernel(f.factor_in.transpose());
  LayerSpec mid = make_depthwise(src.name + ".spatial", r, src.d, src.stride, src.padding);
  mid.kernel = depthwise_kernel(f.factor_spatial, src.d);
  LayerSpec last = make_conv(src.name + ".out", r, src.c_out, 1, 1, 0, false);
  last.kernel = pointwise_kernel(f.factor_out);
  last.bias = src.bias;
  return {std::move(first), std::move(mid), std::move(last)};
}

inline std::vector<LayerSpec> svd_members(const LayerSpec& src, const SVDFactors& f) {
  LayerSpec first = make_fc(src.name + ".in", src.l_in, f.rank(), false);
  first.weight = f.theta_in;
  LayerSpec last = make_fc(src.name + ".out", f.rank(), src.l_out, false);
  last.weight = f.theta_out;
  last.bias = src.bias;
  return {std::move(first), std::move(last)};
}

inline std::vector<std::size_t> ranks_of(const LayerState& s) {
  if (const auto* t = std::get_if<Tucker2Factors>(&s)) return {t->rank().r_out, t->rank().r_in};
  if (const auto* c = std::get_if<CPFactors>(&s)) return {c->cp_rank()};
  if (const auto* v = std::get_if<SVDFactors>(&s)) return {v->rank()};
  throw std::invalid_argument("ranks_of: state is not factorized");
}

inline ModelGraph substitute(const ModelGraph& g, std::size_t layer_id, Scheme scheme,
                             std::vector<LayerSpec> members, std::vector<std::size_t> ranks,
                             bool orthonormal) {
  ModelGraph out = g;
  const std::size_t at = out.index_of(layer_id);
  const LayerSpec src = out.layers[at];
  const auto shapes = infer_shapes(g);

  DecomposedGroup grp;
  grp.id = out.groups.empty() ? 0 : out.groups.back().id + 1;
  for (const auto& existing : out.groups) grp.id = std::max(grp.id, existing.id + 1);
  grp.scheme = scheme;
  grp.ranks = std::move(ranks);
  grp.orthonormal = orthonormal;
  grp.source_id = src.id;
  grp.source_name = src.name;
  grp.source_kernel_params = src.weight_count();
  grp.source_macs = layer_macs(src, shapes[at + 1]);

  out.layers.erase(out.layers.begin() + static_cast<std::ptrdiff_t>(at));
  std::vector<LayerSpec> placed;
  for (auto& m : members) {
    m.id = out.next_id++;
    grp.members.push_back(m.id);
    placed.push_back(std::move(m));
  }
  out.layers.insert(out.layers.begin() + static_cast<std::ptrdiff_t>(at), placed.begin(),
                    placed.end());
  out.groups.push_back(std::move(grp));
  validate_graph(out);
  return out;
}

}  // namespace detail

/// Replaces a conv layer by 1x1 (C_in -> r_in), d x d (r_in -> r_out, original
/// stride and padding), 1x1 (r_out -> C_out). The bias moves to the last member.
inline ModelGraph substitute_conv_tucker2(const ModelGraph& g, std::size_t layer_id,
                                          const Tucker2Factors& f) {
  detail::require_free_layer(g, layer_id, LayerKind::conv2d, "substitute_conv_tucker2");
  f.validate();
  const LayerSpec& src = g.layer(layer_id);
  if (f.d() != src.d || f.c_in() != src.c_in || f.c_out() != src.c_out)
    throw std::invalid_argument("substitute_conv_tucker2: factors do not match layer '" +
                                src.name + "'");
  return detail::substitute(g, layer_id, Scheme::tucker2, detail::tucker2_members(src, f),
                            {f.rank().r_out, f.rank().r_in}, f.orthonormal);
}

/// Replaces a conv layer by 1x1 (C_in -> R), depthwise d x d on R channels,
/// 1x1 (R -> C_out).
inline ModelGraph substitute_conv_cpd3(const ModelGraph& g, std::size_t layer_id,
                                       const CPFactors& f) {
  detail::require_free_layer(g, layer_id, LayerKind::conv2d, "substitute_conv_cpd3");
  f.validate();
  const LayerSpec& src = g.layer(layer_id);
  if (static_cast<std::size_t>(f.factor_spatial.rows()) != src.d * src.d ||
      static_cast<std::size_t>(f.factor_in.rows()) != src.c_in ||
      static_cast<std::size_t>(f.factor_out.rows()) != src.c_out)
    throw std::invalid_argument("substitute_conv_cpd3: factors do not match layer '" +
                                src.name + "'");
  return detail::substitute(g, layer_id, Scheme::cpd3, detail::cpd3_members(src, f),
                            {f.cp_rank()}, false);
}

/// Replaces an fc layer by fc (l_in -> R) and fc (R -> l_out).
inline ModelGraph substitute_fc_svd(const ModelGraph& g, std::size_t layer_id,
                                    const SVDFactors& f) {
  detail::require_free_layer(g, layer_id, LayerKind::fc, "substitute_fc_svd");
  f.validate();
  const LayerSpec& src = g.layer(layer_id);
  if (static_cast<std::size_t>(f.theta_in.rows()) != src.l_in ||
      static_cast<std::size_t>(f.theta_out.cols()) != src.l_out)
    throw std::invalid_argument("substitute_fc_svd: factors do not match layer '" + src.name + "'");
  return detail::substitute(g, layer_id, Scheme::svd, detail::svd_members(src, f), {f.rank()},
                            false);
}

/// Factors currently held by a group's member layers.
inline LayerState group_factors(const ModelGraph& g, const DecomposedGroup& grp) {
  std::vector<const LayerSpec*> m;
  for (std::size_t id : grp.members) m.push_back(&g.layer(id));
  switch (grp.scheme) {
    case Scheme::tucker2:
      return Tucker2Factors{m[1]->kernel, detail::pointwise_matrix(m[2]->kernel),
                            detail::pointwise_matrix(m[0]->kernel).transpose(), grp.orthonormal};
    case Scheme::cpd3: {
      CPFactors f;
      f.factor_spatial = detail::spatial_matrix(m[1]->kernel);
      f.factor_out = detail::pointwise_matrix(m[2]->kernel);
      f.factor_in = detail::pointwise_matrix(m[0]->kernel).transpose();
      return f;
    }
    case Scheme::svd:
      return SVDFactors{m[0]->weight, m[1]->weight};
  }
  throw std::logic_error("group_factors: bad scheme");
}

/// Writes new (same or lower rank) factors into a group's members in place.
inline ModelGraph update_group_weights(const ModelGraph& g, std::size_t group_id,
                                       const LayerState& factors) {
  ModelGraph out = g;
  DecomposedGroup& grp = out.groups[out.group_index(group_id)];
  const std::vector<std::size_t> ranks = detail::ranks_of(factors);
  if (ranks.size() != grp.ranks.size())
    throw std::invalid_argument("update_group_weights: scheme mismatch");
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] > grp.ranks[i])
      throw std::invalid_argument("update_group_weights: rank increase " +
                                  std::to_string(grp.ranks[i]) + " -> " + std::to_string(ranks[i]) +
                                  " in group of '" + grp.source_name + "'");
  }

  const std::size_t first = out.index_of(grp.members.front());
  const std::size_t last = out.index_of(grp.members.back());
  LayerSpec src = out.layers[first + 1];  // middle (or second fc) carries d, stride, padding
  src.name = grp.source_name;
  src.c_in = out.layers[first].c_in;
  src.c_out = out.layers[last].c_out;
  src.l_in = out.layers[first].l_in;
  src.l_out = out.layers[last].l_out;
  src.bias = out.layers[last].bias;

  std::vector<LayerSpec> members;
  if (const auto* t = std::get_if<Tucker2Factors>(&factors)) {
    if (grp.scheme != Scheme::tucker2) throw std::invalid_argument("update_group_weights: scheme mismatch");
    members = detail::tucker2_members(src, *t);
    grp.orthonormal = t->orthonormal;
  } else if (const auto* c = std::get_if<CPFactors>(&factors)) {
    if (grp.scheme != Scheme::cpd3) throw std::invalid_argument("update_group_weights: scheme mismatch");
    members = detail::cpd3_members(src, *c);
  } else if (const auto* v = std::get_if<SVDFactors>(&factors)) {
    if (grp.scheme != Scheme::svd) throw std::invalid_argument("update_group_weights: scheme mismatch");
    members = detail::svd_members(src, *v);
  } else {
    throw std::invalid_argument("update_group_weights: dense state given");
  }
  for (std::size_t k = 0; k < members.size(); ++k) {
    LayerSpec& dst = out.layers[first + k];
    members[k].id = dst.id;
    members[k].name = dst.name;
    dst = std::move(members[k]);
  }
  grp.ranks = ranks;
  validate_graph(out);
  return out;
}

}  // namespace musco

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
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "musco/dataset.hpp"
#include "musco/model_graph.hpp"

namespace musco {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  std::size_t patience = 3;  // epochs without eval improvement before stopping

  void validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning_rate < 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw std::invalid_argument("TrainConfig: momentum outside [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay < 0");
  }
};

struct TrainHistory {
  std::vector<double> train_loss, train_accuracy;
  std::vector<double> eval_loss, eval_accuracy;
  std::size_t best_epoch = 0;  // 0 = weights before training
  bool stopped_early = false;

  std::size_t epochs() const { return train_loss.size(); }
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, TrainHistory h)
      : std::runtime_error(what), history(std::move(h)) {}
  TrainHistory history;
};

/// Gradient of one layer; empty members for layers without weights.
struct LayerGrad {
  DenseTensor kernel;
  Matrix2 weight;
  Vector bias;
};

struct ForwardCache {
  std::vector<Activation> inputs;                 // input of each layer
  std::vector<RowMatrix> cols;                    // im2col buffers (conv2d only)
  std::vector<std::vector<Eigen::Index>> argmax;  // maxpool winners
  Activation output;
};

namespace detail {

inline RowMatrix conv_weight_matrix(const LayerSpec& l) {
  const std::size_t d = l.d, ci = l.c_in;
  RowMatrix w(static_cast<Eigen::Index>(d * d * ci), static_cast<Eigen::Index>(l.c_out));
  for (std::size_t i = 0; i < ci; ++i)
    for (std::size_t o = 0; o < l.c_out; ++o)
      for (std::size_t kw = 0; kw < d; ++kw)
        for (std::size_t kh = 0; kh < d; ++kh)
          w(static_cast<Eigen::Index>((kh + d * kw) * ci + i), static_cast<Eigen::Index>(o)) =
              l.kernel(kh, kw, o, i);
  return w;
}

// Calls f(out_row, in_row, kh, kw) for every in-bounds tap of a d x d window.
template <typename F>
void for_each_tap(const LayerSpec& l, std::size_t n, const ActShape& in, const ActShape& out,
                  std::size_t pad, F&& f) {
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < out.h; ++oy)
      for (std::size_t ox = 0; ox < out.w; ++ox) {
        const std::size_t row = (b * out.h + oy) * out.w + ox;
        for (std::size_t kw = 0; kw < l.d; ++kw) {
          const auto ix = static_cast<long>(ox * l.stride + kw) - static_cast<long>(pad);
          if (ix < 0 || ix >= static_cast<long>(in.w)) continue;
          for (std::size_t kh = 0; kh < l.d; ++kh) {
            const auto iy = static_cast<long>(oy * l.stride + kh) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(in.h)) continue;
            f(row, (b * in.h + static_cast<std::size_t>(iy)) * in.w + static_cast<std::size_t>(ix),
              kh, kw);
          }
        }
      }
}

inline RowMatrix im2col(const Activation& x, const LayerSpec& l, const ActShape& out) {
  const auto ci = static_cast<Eigen::Index>(l.c_in);
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(x.n * out.h * out.w),
                                   static_cast<Eigen::Index>(l.d * l.d) * ci);
  for_each_tap(l, x.n, x.shape, out, l.padding,
               [&](std::size_t row, std::size_t in_row, std::size_t kh, std::size_t kw) {
                 cols.row(static_cast<Eigen::Index>(row))
                     .segment(static_cast<Eigen::Index>(kh + l.d * kw) * ci, ci) =
                     x.data.row(static_cast<Eigen::Index>(in_row));
               });
  return cols;
}

inline Eigen::RowVectorXd depthwise_taps(const LayerSpec& l, std::size_t kh, std::size_t kw) {
  Eigen::RowVectorXd t(static_cast<Eigen::Index>(l.c_out));
  for (std::size_t c = 0; c < l.c_out; ++c) t(static_cast<Eigen::Index>(c)) = l.kernel(kh, kw, c, 0);
  return t;
}

inline void add_bias(RowMatrix& y, const std::optional<Vector>& bias) {
  if (bias) y.rowwise() += bias->transpose();
}

}  // namespace detail

/// Runs the graph on a batch, keeping what the backward pass needs.
inline ForwardCache forward_cached(const ModelGraph& g, const Activation& x) {
  if (x.shape != g.input)
    throw std::invalid_argument("forward: batch shape " + act_string(x.shape) +
                                " does not match model input " + act_string(g.input));
  if (static_cast<std::size_t>(x.data.rows()) != x.n * x.shape.h * x.shape.w)
    throw std::invalid_argument("forward: activation rows do not match batch size");
  const auto shapes = infer_shapes(g);
  ForwardCache cache;
  cache.inputs.reserve(g.layers.size());
  cache.cols.resize(g.layers.size());
  cache.argmax.resize(g.layers.size());
  Activation cur = x;
  for (std::size_t li = 0; li < g.layers.size(); ++li) {
    const LayerSpec& l = g.layers[li];
    const ActShape out_shape = shapes[li + 1];
    Activation y(cur.n, out_shape);
    switch (l.kind) {
      case LayerKind::conv2d: {
        cache.cols[li] = detail::im2col(cur, l, out_shape);
        y.data.noalias() = cache.cols[li] * detail::conv_weight_matrix(l);
        detail::add_bias(y.data, l.bias);
        break;
      }
      case LayerKind::grouped_conv2d: {
        std::vector<Eigen::RowVectorXd> taps(l.d * l.d);
        for (std::size_t kw = 0; kw < l.d; ++kw)
          for (std::size_t kh = 0; kh < l.d; ++kh) taps[kh + l.d * kw] = detail::depthwise_taps(l, kh, kw);
        detail::for_each_tap(l, cur.n, cur.shape, out_shape, l.padding,
                             [&](std::size_t row, std::size_t in_row, std::size_t kh, std::size_t kw) {
                               y.data.row(static_cast<Eigen::Index>(row)) +=
                                   cur.data.row(static_cast<Eigen::Index>(in_row))
                                       .cwiseProduct(taps[kh + l.d * kw]);
                             });
        detail::add_bias(y.data, l.bias);
        break;
      }
      case LayerKind::fc:
        y.data.noalias() = cur.data * l.weight;
        detail::add_bias(y.data, l.bias);
        break;
      case LayerKind::relu:
        y.data = cur.data.cwiseMax(0.0);
        break;
      case LayerKind::maxpool2d: {
        auto& arg = cache.argmax[li];
        arg.assign(static_cast<std::size_t>(y.data.size()), -1);
        y.data.setConstant(-std::numeric_limits<double>::infinity());
        const auto c = static_cast<Eigen::Index>(out_shape.c);
        detail::for_each_tap(l, cur.n, cur.shape, out_shape, 0,
                             [&](std::size_t row, std::size_t in_row, std::size_t, std::size_t) {
                               for (Eigen::Index k = 0; k < c; ++k) {
                                 const double v = cur.data(static_cast<Eigen::Index>(in_row), k);
                                 double& best = y.data(static_cast<Eigen::Index>(row), k);
                                 if (v > best) {
                                   best = v;
                                   arg[row * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)] =
                                       static_cast<Eigen::Index>(in_row);
                                 }
                               }
                             });
        break;
      }
      case LayerKind::flatten:
        // Row-major storage already lays each sample out as h, w, c.
        y.data = Eigen::Map<const RowMatrix>(cur.data.data(), static_cast<Eigen::Index>(cur.n),
                                             static_cast<Eigen::Index>(out_shape.c));
        break;
      case LayerKind::softmax_xent_head:
        y.data = cur.data;
        break;
    }
    cache.inputs.push_back(std::move(cur));
    cur = std::move(y);
  }
  cache.output = std::move(cur);
  return cache;
}

/// Logits (or the last activation) for a batch.
inline RowMatrix forward(const ModelGraph& g, const Activation& x) {
  return forward_cached(g, x).output.data;
}

/// Mean softmax cross-entropy. Writes d loss / d logits when `grad` is set.
inline double softmax_xent(const RowMatrix& logits, const std::vector<int>& targets,
                           RowMatrix* grad = nullptr) {
  const auto n = logits.rows();
  if (static_cast<std::size_t>(n) != targets.size())
    throw std::invalid_argument("softmax_xent: batch size mismatch");
  if (grad) grad->resize(n, logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logits.cols())
      throw std::invalid_argument("softmax_xent: target " + std::to_string(t) + " out of range");
    const double m = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp().matrix();
    const double z = e.sum();
    loss += std::log(z) + m - logits(i, t);
    if (grad) {
      grad->row(i) = e / (z * static_cast<double>(n));
      (*grad)(i, t) -= 1.0 / static_cast<double>(n);
    }
  }
  return loss / static_cast<double>(n);
}

struct LossGrad {
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<LayerGrad> grads;  // one per layer
};

inline std::size_t count_correct(const RowMatrix& logits, const std::vector<int>& targets) {
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    correct += arg == targets[static_cast<std::size_t>(i)];
  }
  return correct;
}

/// Loss and gradients for every weight and bias by reverse accumulation.
inline LossGrad loss_and_grad(const ModelGraph& g, const Batch& batch) {
  ForwardCache cache = forward_cached(g, batch.inputs);
  LossGrad out;
  RowMatrix dy;
  out.loss = softmax_xent(cache.output.data, batch.targets, &dy);
  if (!std::isfinite(out.loss)) throw std::runtime_error("loss_and_grad: non-finite loss");
  out.correct = count_correct(cache.output.data, batch.targets);
  out.grads.resize(g.layers.size());

  for (std::size_t li = g.layers.size(); li-- > 0;) {
    const LayerSpec& l = g.layers[li];
    const Activation& x = cache.inputs[li];
    LayerGrad& gr = out.grads[li];
    if (l.bias) gr.bias = dy.colwise().sum().transpose();
    RowMatrix dx = RowMatrix::Zero(x.data.rows(), x.data.cols());
    switch (l.kind) {
      case LayerKind::conv2d: {
        const RowMatrix dw = cache.cols[li].transpose() * dy;
        gr.kernel = DenseTensor(l.kernel.shape());
        const std::size_t d = l.d, ci = l.c_in;
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t o = 0; o < l.c_out; ++o)
            for (std::size_t kw = 0; kw < d; ++kw)
              for (std::size_t kh = 0; kh < d; ++kh)
                gr.kernel(kh, kw, o, i) =
                    dw(static_cast<Eigen::Index>((kh + d * kw) * ci + i), static_cast<Eigen::Index>(o));
        if (li == 0) break;  // input gradient not needed
        const RowMatrix dcols = dy * detail::conv_weight_matrix(l).transpose();
        const auto c = static_cast<Eigen::Index>(ci);
        const ActShape out_shape = cache.inputs.size() > li + 1 ? cache.inputs[li + 1].shape
                                                                : cache.output.shape;
        detail::for_each_tap(l, x.n, x.shape, out_shape, l.padding,
                             [&](std::size_t row, std::size_t in_row, std::size_t kh, std::size_t kw) {
                               dx.row(static_cast<Eigen::Index>(in_row)) +=
                                   dcols.row(static_cast<Eigen::Index>(row))
                                       .segment(static_cast<Eigen::Index>(kh + d * kw) * c, c);
                             });
        break;
      }
      case LayerKind::grouped_conv2d: {
        gr.kernel = DenseTensor(l.kernel.shape());
        const ActShape out_shape = cache.inputs.size() > li + 1 ? cache.inputs[li + 1].shape
                                                                : cache.output.shape;
        std::vector<Eigen::RowVectorXd> taps(l.d * l.d), dtaps(l.d * l.d);
        for (std::size_t kw = 0; kw < l.d; ++kw)
          for (std::size_t kh = 0; kh < l.d; ++kh) {
            taps[kh + l.d * kw] = detail::depthwise_taps(l, kh, kw);
            dtaps[kh + l.d * kw] = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(l.c_out));
          }
        detail::for_each_tap(l, x.n, x.shape, out_shape, l.padding,
                             [&](std::size_t row, std::size_t in_row, std::size_t kh, std::size_t kw) {
                               const std::size_t t = kh + l.d * kw;
                               const auto r = static_cast<Eigen::Index>(row);
                               const auto ir = static_cast<Eigen::Index>(in_row);
                               dtaps[t] += dy.row(r).cwiseProduct(x.data.row(ir));
                               dx.row(ir) += dy.row(r).cwiseProduct(taps[t]);
                             });
        for (std::size_t kw = 0; kw < l.d; ++kw)
          for (std::size_t kh = 0; kh < l.d; ++kh)
            for (std::size_t c = 0; c < l.c_out; ++c)
              gr.kernel(kh, kw, c, 0) = dtaps[kh + l.d * kw](static_cast<Eigen::Index>(c));
        break;
      }
      case LayerKind::fc:
        gr.weight = x.data.transpose() * dy;
        dx.noalias() = dy * l.weight.transpose();
        break;
      case LayerKind::relu:
        dx = (x.data.array() > 0.0).select(dy.array(), 0.0).matrix();
        break;
      case LayerKind::maxpool2d: {
        const auto& arg = cache.argmax[li];
        const auto c = dy.cols();
        for (Eigen::Index r = 0; r < dy.rows(); ++r)
          for (Eigen::Index k = 0; k < c; ++k) {
            const Eigen::Index src = arg[static_cast<std::size_t>(r * c + k)];
            if (src >= 0) dx(src, k) += dy(r, k);
          }
        break;
      }
      case LayerKind::flatten:
        dx = Eigen::Map<const RowMatrix>(dy.data(), x.data.rows(), x.data.cols());
        break;
      case LayerKind::softmax_xent_head:
        dx = dy;
        break;
    }
    dy = std::move(dx);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flat parameter views, in layer order: weights then bias.

inline std::vector<double*> parameter_pointers(ModelGraph& g) {
  std::vector<double*> p;
  for (LayerSpec& l : g.layers) {
    if (l.is_conv())
      for (double& v : l.kernel.mutable_data()) p.push_back(&v);
    if (l.kind == LayerKind::fc)
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) p.push_back(l.weight.data() + i);
    if (l.bias)
      for (Eigen::Index i = 0; i < l.bias->size(); ++i) p.push_back(l.bias->data() + i);
  }
  return p;
}

inline std::vector<double> flatten_grads(const ModelGraph& g, const std::vector<LayerGrad>& grads) {
  std::vector<double> out;
  for (std::size_t li = 0; li < g.layers.size(); ++li) {
    const LayerSpec& l = g.layers[li];
    const LayerGrad& gr = grads[li];
    if (l.is_conv()) out.insert(out.end(), gr.kernel.data().begin(), gr.kernel.data().end());
    if (l.kind == LayerKind::fc) out.insert(out.end(), gr.weight.data(), gr.weight.data() + gr.weight.size());
    if (l.bias) out.insert(out.end(), gr.bias.data(), gr.bias.data() + gr.bias.size());
  }
  return out;
}

/// Momentum SGD: v <- momentum v + (g + wd w); w <- w - lr v. Weight decay
/// applies to weights, not biases.
struct SGDState {
  std::vector<double> velocity;
};

inline void sgd_step(ModelGraph& g, const std::vector<LayerGrad>& grads, const TrainConfig& cfg,
                     SGDState& state) {
  if (grads.size() != g.layers.size()) throw std::invalid_argument("sgd_step: gradient count mismatch");
  std::vector<double*> w = parameter_pointers(g);
  const std::vector<double> gflat = flatten_grads(g, grads);
  if (gflat.size() != w.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
  if (state.velocity.size() != w.size()) state.velocity.assign(w.size(), 0.0);

  std::vector<bool> decays;
  for (const LayerSpec& l : g.layers) {
    decays.insert(decays.end(), l.weight_count(), true);
    decays.insert(decays.end(), l.bias_count(), false);
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double grad = gflat[i] + (decays[i] ? cfg.weight_decay * *w[i] : 0.0);
    state.velocity[i] = cfg.momentum * state.velocity[i] + grad;
    *w[i] -= cfg.learning_rate * state.velocity[i];
  }
}

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline EvalResult evaluate(const ModelGraph& g, const Dataset& data, std::size_t batch_size = 256) {
  EvalResult r;
  if (data.size() == 0) return r;
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    const Batch batch = data.range(b, e);
    const RowMatrix logits = forward(g, batch.inputs);
    loss += softmax_xent(logits, batch.targets) * static_cast<double>(e - b);
    correct += count_correct(logits, batch.targets);
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  r.loss = loss / static_cast<double>(data.size());
  return r;
}

struct FineTuneResult {
  ModelGraph graph;
  TrainHistory history;
};

/// Minibatch momentum SGD on the graph's own layer weights, so decomposed
/// groups keep their ranks. Stops after `patience` epochs without an eval
/// accuracy gain and returns the best weights seen, including the starting
/// ones.
inline FineTuneResult fine_tune(const ModelGraph& start, const Dataset& train, const Dataset& eval,
                                const TrainConfig& cfg) {
  cfg.validate();
  FineTuneResult res{start, {}};
  if (cfg.epochs == 0 || train.size() == 0) return res;

  auto better = [](const EvalResult& a, const EvalResult& b) {
    return a.accuracy > b.accuracy || (a.accuracy == b.accuracy && a.loss < b.loss);
  };
  ModelGraph g = start;
  for (auto& grp : g.groups) grp.orthonormal = false;  // trained factors lose orthonormality
  EvalResult best = evaluate(g, eval);
  ModelGraph best_graph = g;
  bool improved_any = false;
  std::mt19937_64 rng(cfg.seed);
  SGDState state;
  std::vector<std::size_t> order(train.size());
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), b + cfg.batch_size)));
      LossGrad lg;
      try {
        lg = loss_and_grad(g, train.batch(idx));
      } catch (const std::runtime_error& e) {
        throw TrainingDiverged("fine_tune: diverged in epoch " + std::to_string(epoch) + ": " +
                                   e.what(),
                               res.history);
      }
      loss_sum += lg.loss * static_cast<double>(idx.size());
      correct += lg.correct;
      sgd_step(g, lg.grads, cfg, state);
    }
    const EvalResult ev = evaluate(g, eval);
    TrainHistory& h = res.history;
    h.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
    h.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(train.size()));
    h.eval_loss.push_back(ev.loss);
    h.eval_accuracy.push_back(ev.accuracy);
    if (!std::isfinite(ev.loss) || !std::isfinite(h.train_loss.back()))
      throw TrainingDiverged("fine_tune: non-finite loss in epoch " + std::to_string(epoch), h);
    if (better(ev, best)) {
      best = ev;
      best_graph = g;
      h.best_epoch = epoch;
      improved_any = true;
      since_best = 0;
    } else if (++since_best >= cfg.patience && epoch < cfg.epochs) {
      h.stopped_early = true;
      break;
    }
  }
  res.graph = improved_any ? std::move(best_graph) : start;
  if (improved_any)
    for (auto& grp : res.graph.groups) grp.orthonormal = false;
  return res;
}

}  // namespace musco

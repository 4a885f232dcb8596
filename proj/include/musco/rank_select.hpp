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
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "musco/cpd3.hpp"
#include "musco/evbmf.hpp"
#include "musco/svd_factors.hpp"
#include "musco/tucker2.hpp"

namespace musco {

enum class Scheme { tucker2, cpd3, svd };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::tucker2: return "tucker2";
    case Scheme::cpd3: return "cpd3";
    case Scheme::svd: return "svd";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "tucker2") return Scheme::tucker2;
  if (s == "cpd3") return Scheme::cpd3;
  if (s == "svd") return Scheme::svd;
  throw std::invalid_argument("unknown decomposition scheme '" + s + "'");
}

struct RankStrategy {
  enum class Mode { bayesian, constant_rate };

  Mode mode = Mode::constant_rate;
  double weakening = 0.7;  // bayesian; 0.5..0.9 works best in practice
  double alpha = 2.0;      // constant_rate: parameter reduction per step
  double beta = 1.0;       // constant_rate, tucker2: r_out = beta * r_in
  std::size_t min_rank_guard = 21;

  void validate() const {
    if (mode == Mode::bayesian && !(weakening > 0.0 && weakening < 1.0))
      throw std::invalid_argument("RankStrategy: weakening factor must be in (0, 1)");
    if (mode == Mode::constant_rate && !(alpha > 1.0))
      throw std::invalid_argument("RankStrategy: alpha must be > 1");
    if (!(beta > 0.0)) throw std::invalid_argument("RankStrategy: beta must be > 0");
    if (min_rank_guard < 1) throw std::invalid_argument("RankStrategy: min_rank_guard < 1");
  }
};

// ---------------------------------------------------------------------------
// Kernel parameter counts of the factorized forms.

inline double tucker2_kernel_params(std::size_t c_in, std::size_t c_out, std::size_t d,
                                    const MultilinearRank2& r) {
  return static_cast<double>(r.r_in * c_in + d * d * r.r_in * r.r_out + r.r_out * c_out);
}

inline double cpd3_kernel_params(std::size_t c_in, std::size_t c_out, std::size_t d,
                                 std::size_t rank) {
  return static_cast<double>(rank * (c_in + d * d + c_out));
}

inline double svd_params(std::size_t l_in, std::size_t l_out, std::size_t rank) {
  return static_cast<double>(rank * (l_in + l_out));
}

// ---------------------------------------------------------------------------
// Weakened rank.

/// floor(r_init - w (r_init - r_extr)), clamped to [r_extr, r_init].
inline std::size_t weakened_rank(std::size_t r_init, std::size_t r_extr, double w) {
  if (r_extr > r_init) {
    throw std::invalid_argument("weakened_rank: extreme rank " + std::to_string(r_extr) +
                                " exceeds initial rank " + std::to_string(r_init));
  }
  if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("weakened_rank: w outside [0, 1]");
  const double gap = static_cast<double>(r_init - r_extr);
  const double value = static_cast<double>(r_init) - w * gap;
  const auto r = static_cast<std::size_t>(std::floor(value + 1e-9));
  return std::clamp(r, r_extr, r_init);
}

// ---------------------------------------------------------------------------
// Constant compression rate.

struct RateRank {
  bool feasible = false;
  std::size_t unclamped = 0;  // largest R meeting the budget before channel clamping
  MultilinearRank2 tucker;    // tucker2 only
  std::size_t rank = 0;       // cpd3 / svd
};

namespace detail {

inline void require_alpha(double alpha, const char* who) {
  if (!(alpha >= 1.0)) throw std::invalid_argument(std::string(who) + ": alpha must be >= 1");
}

// R c_in + beta d^2 R^2 + beta R c_out with the (R, beta R) rank form.
inline double tucker2_form_params(double c_in, double c_out, double d, double beta, double R) {
  return R * c_in + beta * d * d * R * R + beta * R * c_out;
}

inline MultilinearRank2 tucker2_ranks_for(std::size_t R, double beta, std::size_t cap_out,
                                          std::size_t cap_in) {
  const auto r_out = static_cast<std::size_t>(std::floor(beta * static_cast<double>(R) + 1e-9));
  return {std::clamp<std::size_t>(r_out, 1, cap_out), std::clamp<std::size_t>(R, 1, cap_in)};
}

}  // namespace detail

/// Largest R with R c_in + d^2 beta R^2 + beta R c_out <= d^2 c_in c_out / alpha
/// (closed form of the quadratic), returned as ranks (r_out, r_in) =
/// (floor(beta R), R) clamped to the channel extents.
inline RateRank tucker2_rate_rank(std::size_t c_in, std::size_t c_out, std::size_t d,
                                  double alpha, double beta) {
  detail::require_alpha(alpha, "tucker2_rate_rank");
  if (!(beta > 0.0)) throw std::invalid_argument("tucker2_rate_rank: beta must be > 0");
  const double ci = static_cast<double>(c_in), co = static_cast<double>(c_out);
  const double dd = static_cast<double>(d * d);
  const double budget = dd * ci * co / alpha;
  const double lin = (ci + beta * co) / (beta * dd);
  const double root = 0.5 * (-lin + std::sqrt(lin * lin + 4.0 * ci * co / (beta * alpha)));

  auto fits = [&](double R) {
    return detail::tucker2_form_params(ci, co, static_cast<double>(d), beta, R) <= budget;
  };
  auto R = static_cast<long long>(std::floor(root));
  while (fits(static_cast<double>(R + 1))) ++R;  // guard against round-off in the root
  while (R >= 1 && !fits(static_cast<double>(R))) --R;

  RateRank out;
  if (R < 1) return out;
  out.unclamped = static_cast<std::size_t>(R);
  auto R_int = out.unclamped;
  out.tucker = detail::tucker2_ranks_for(R_int, beta, c_out, c_in);
  while (tucker2_kernel_params(c_in, c_out, d, out.tucker) > budget && R_int > 1) {
    out.tucker = detail::tucker2_ranks_for(--R_int, beta, c_out, c_in);
  }
  out.feasible = tucker2_kernel_params(c_in, c_out, d, out.tucker) <= budget;
  return out;
}

/// floor(d^2 c_in c_out / (alpha (c_in + d^2 + c_out))).
inline RateRank cpd3_rate_rank(std::size_t c_in, std::size_t c_out, std::size_t d,
                               double alpha) {
  detail::require_alpha(alpha, "cpd3_rate_rank");
  const double original = static_cast<double>(d * d * c_in * c_out);
  const double per_rank = static_cast<double>(c_in + d * d + c_out);
  auto R = static_cast<long long>(std::floor(original / (alpha * per_rank)));
  while (static_cast<double>(R + 1) * per_rank * alpha <= original) ++R;
  while (R >= 1 && static_cast<double>(R) * per_rank * alpha > original) --R;
  RateRank out;
  out.feasible = R >= 1;
  out.unclamped = out.rank = out.feasible ? static_cast<std::size_t>(R) : 0;
  return out;
}

/// floor(l_in l_out / (alpha (l_in + l_out))), capped at min(l_in, l_out).
inline RateRank svd_rate_rank(std::size_t l_in, std::size_t l_out, double alpha) {
  detail::require_alpha(alpha, "svd_rate_rank");
  const double original = static_cast<double>(l_in * l_out);
  const double per_rank = static_cast<double>(l_in + l_out);
  auto R = static_cast<long long>(std::floor(original / (alpha * per_rank)));
  while (static_cast<double>(R + 1) * per_rank * alpha <= original) ++R;
  while (R >= 1 && static_cast<double>(R) * per_rank * alpha > original) --R;
  RateRank out;
  out.feasible = R >= 1;
  out.unclamped = out.feasible ? static_cast<std::size_t>(R) : 0;
  out.rank = std::min(out.unclamped, std::min(l_in, l_out));
  return out;
}

/// Largest (floor(beta R), R) within `cap` whose Tucker-2 parameter count
/// fits `budget`. Used when an already factorized layer is compressed again.
inline RateRank tucker2_budget_rank(std::size_t c_in, std::size_t c_out, std::size_t d,
                                    double beta, double budget, const MultilinearRank2& cap) {
  RateRank out;
  const std::size_t limit = std::max(cap.r_in, static_cast<std::size_t>(
                                                   std::ceil(cap.r_out / beta)));
  for (std::size_t R = 1; R <= limit; ++R) {
    const MultilinearRank2 r = detail::tucker2_ranks_for(R, beta, cap.r_out, cap.r_in);
    if (tucker2_kernel_params(c_in, c_out, d, r) > budget) break;
    out.feasible = true;
    out.unclamped = R;
    out.tucker = r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-layer selection.

/// Uncompressed conv layer, to be factorized with `scheme`.
struct DenseConvState {
  Kernel4 kernel;
  Scheme scheme = Scheme::tucker2;
};

/// Uncompressed fully connected layer, W is l_in x l_out.
struct DenseFcState {
  Matrix2 weight;
};

using LayerState =
    std::variant<DenseConvState, DenseFcState, Tucker2Factors, CPFactors, SVDFactors>;

struct RankProposal {
  bool skip = false;
  std::string reason;  // "min_rank_guard" or "infeasible" when skipped
  Scheme scheme = Scheme::tucker2;
  MultilinearRank2 tucker;     // tucker2
  std::size_t rank = 0;        // cpd3 / svd
  std::size_t governing_rank = 0;
  std::vector<std::size_t> extreme;  // EVBMF estimates (bayesian mode)

  /// (r_out, r_in) for tucker2, (R) otherwise.
  std::vector<std::size_t> ranks() const {
    if (scheme == Scheme::tucker2) return {tucker.r_out, tucker.r_in};
    return {rank};
  }
};

namespace detail {

inline std::size_t evbmf_extreme(const Matrix2& m) {
  return std::max<std::size_t>(1, evbmf_rank(m).rank);
}

inline RankProposal skipped(Scheme scheme, std::size_t governing, std::string reason) {
  RankProposal p;
  p.skip = true;
  p.scheme = scheme;
  p.governing_rank = governing;
  p.reason = std::move(reason);
  return p;
}

struct Selector {
  const RankStrategy& s;

  bool bayes() const { return s.mode == RankStrategy::Mode::bayesian; }

  RankProposal guard(Scheme scheme, std::size_t governing) const {
    return skipped(scheme, governing, "min_rank_guard");
  }

  RankProposal operator()(const DenseConvState& st) const {
    const Kernel4& k = st.kernel;
    const std::size_t governing = std::min(k.c_in(), k.c_out());
    if (governing < s.min_rank_guard) return guard(st.scheme, governing);
    RankProposal p;
    p.scheme = st.scheme;
    p.governing_rank = governing;
    if (st.scheme == Scheme::tucker2) {
      if (bayes()) {
        const std::size_t e_out = std::min(evbmf_extreme(unfold(k.tensor(), 2)), k.c_out());
        const std::size_t e_in = std::min(evbmf_extreme(unfold(k.tensor(), 3)), k.c_in());
        p.extreme = {e_out, e_in};
        p.tucker = {weakened_rank(k.c_out(), e_out, s.weakening),
                    weakened_rank(k.c_in(), e_in, s.weakening)};
        return p;
      }
      const RateRank r = tucker2_rate_rank(k.c_in(), k.c_out(), k.d(), s.alpha, s.beta);
      if (!r.feasible) return skipped(st.scheme, governing, "infeasible");
      p.tucker = r.tucker;
      return p;
    }
    if (st.scheme != Scheme::cpd3) throw std::invalid_argument("select_ranks: conv needs tucker2 or cpd3");
    if (bayes()) {
      const std::size_t init = std::max(k.c_in(), k.c_out());
      const std::size_t e = std::min(init, std::max(evbmf_extreme(unfold(k.tensor(), 2)),
                                                    evbmf_extreme(unfold(k.tensor(), 3))));
      p.extreme = {e};
      p.rank = weakened_rank(init, e, s.weakening);
      return p;
    }
    const RateRank r = cpd3_rate_rank(k.c_in(), k.c_out(), k.d(), s.alpha);
    if (!r.feasible) return skipped(st.scheme, governing, "infeasible");
    p.rank = r.rank;
    return p;
  }

  RankProposal operator()(const DenseFcState& st) const {
    const auto l_in = static_cast<std::size_t>(st.weight.rows());
    const auto l_out = static_cast<std::size_t>(st.weight.cols());
    const std::size_t governing = std::min(l_in, l_out);
    if (governing < s.min_rank_guard) return guard(Scheme::svd, governing);
    RankProposal p;
    p.scheme = Scheme::svd;
    p.governing_rank = governing;
    if (bayes()) {
      const std::size_t e = std::min(governing, evbmf_extreme(st.weight));
      p.extreme = {e};
      p.rank = weakened_rank(governing, e, s.weakening);
      return p;
    }
    const RateRank r = svd_rate_rank(l_in, l_out, s.alpha);
    if (!r.feasible) return skipped(Scheme::svd, governing, "infeasible");
    p.rank = r.rank;
    return p;
  }

  RankProposal operator()(const Tucker2Factors& f) const {
    const MultilinearRank2 cur = f.rank();
    const std::size_t governing = std::min(cur.r_out, cur.r_in);
    if (governing < s.min_rank_guard) return guard(Scheme::tucker2, governing);
    RankProposal p;
    p.scheme = Scheme::tucker2;
    p.governing_rank = governing;
    if (bayes()) {
      const std::size_t e_out = std::min(evbmf_extreme(unfold(f.core, 2)), cur.r_out);
      const std::size_t e_in = std::min(evbmf_extreme(unfold(f.core, 3)), cur.r_in);
      p.extreme = {e_out, e_in};
      p.tucker = {weakened_rank(cur.r_out, e_out, s.weakening),
                  weakened_rank(cur.r_in, e_in, s.weakening)};
      return p;
    }
    const double budget = tucker2_kernel_params(f.c_in(), f.c_out(), f.d(), cur) / s.alpha;
    const RateRank r = tucker2_budget_rank(f.c_in(), f.c_out(), f.d(), s.beta, budget, cur);
    if (!r.feasible) return skipped(Scheme::tucker2, governing, "infeasible");
    p.tucker = r.tucker;
    return p;
  }

  RankProposal operator()(const CPFactors& f) const {
    const std::size_t cur = f.cp_rank();
    if (cur < s.min_rank_guard) return guard(Scheme::cpd3, cur);
    RankProposal p;
    p.scheme = Scheme::cpd3;
    p.governing_rank = cur;
    if (bayes()) {
      const DenseTensor t = cpd3_reconstruct(f).tensor();
      const std::size_t e = std::min(
          cur, std::max(evbmf_extreme(unfold(t, 1)), evbmf_extreme(unfold(t, 2))));
      p.extreme = {e};
      p.rank = weakened_rank(cur, e, s.weakening);
      return p;
    }
    const auto R = static_cast<std::size_t>(std::floor(static_cast<double>(cur) / s.alpha + 1e-9));
    if (R < 1) return skipped(Scheme::cpd3, cur, "infeasible");
    p.rank = std::min(R, cur);
    return p;
  }

  RankProposal operator()(const SVDFactors& f) const {
    const std::size_t cur = f.rank();
    if (cur < s.min_rank_guard) return guard(Scheme::svd, cur);
    RankProposal p;
    p.scheme = Scheme::svd;
    p.governing_rank = cur;
    if (bayes()) {
      const std::size_t e = std::min(cur, evbmf_extreme(f.product()));
      p.extreme = {e};
      p.rank = weakened_rank(cur, e, s.weakening);
      return p;
    }
    const auto R = static_cast<std::size_t>(std::floor(static_cast<double>(cur) / s.alpha + 1e-9));
    if (R < 1) return skipped(Scheme::svd, cur, "infeasible");
    p.rank = std::min(R, cur);
    return p;
  }
};

}  // namespace detail

/// Proposes the next ranks for one layer. Proposals never exceed the
/// layer's current ranks; layers whose governing rank is below the guard
/// are skipped.
inline RankProposal select_ranks(const LayerState& state, const RankStrategy& strategy) {
  strategy.validate();
  return std::visit(detail::Selector{strategy}, state);
}

}  // namespace musco

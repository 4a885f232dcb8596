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
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "musco/linalg.hpp"

namespace musco {

/// Rank and noise level estimated by empirical variational Bayesian matrix
/// factorization, using its global analytic solution.
struct EVBMFEstimate {
  std::size_t rank = 0;
  double noise_variance = 0.0;
  double threshold = 0.0;
  std::vector<double> retained_singular_values;  // observed values above threshold
  std::vector<double> shrunk_singular_values;    // their EVB posterior estimates
  bool degenerate = false;                       // zero input
};

/// Singular values and dimensions of a matrix arranged so that L <= M.
struct EVBMFProblem {
  std::vector<double> s;  // non-increasing, length L
  double L = 0;
  double M = 0;

  double alpha() const { return L / M; }
  double tau_bar() const { return 2.5129 * std::sqrt(alpha()); }
  double x_bar() const {
    const double t = tau_bar();
    return (1.0 + t) * (1.0 + alpha() / t);
  }
};

inline EVBMFProblem make_evbmf_problem(const Matrix2& m) {
  const bool wide = m.rows() <= m.cols();
  const Vector s = svd(m).S;
  EVBMFProblem p;
  p.s.assign(s.data(), s.data() + s.size());
  p.L = static_cast<double>(wide ? m.rows() : m.cols());
  p.M = static_cast<double>(wide ? m.cols() : m.rows());
  return p;
}

/// Free energy of the EVB solution as a function of the noise variance.
inline double evbmf_free_energy(const EVBMFProblem& p, double sigma2) {
  const double alpha = p.alpha();
  const double xb = p.x_bar();
  double f = 0.0;
  for (double sv : p.s) {
    const double x = sv * sv / (p.M * sigma2);
    if (x > xb) {
      const double c = x - (1.0 + alpha);
      const double tau = 0.5 * (c + std::sqrt(std::max(0.0, c * c - 4.0 * alpha)));
      f += x - tau + std::log((tau + 1.0) / x) + alpha * std::log(tau / alpha + 1.0);
    } else {
      // x - log x, written to stay finite for zero singular values
      f += x - (2.0 * std::log(std::max(sv, std::numeric_limits<double>::min())) -
                std::log(p.M * sigma2));
    }
  }
  return f;
}

/// Interval that must contain the optimal noise variance.
inline std::pair<double, double> evbmf_search_bounds(const EVBMFProblem& p) {
  const std::size_t L = p.s.size();
  double total = 0.0;
  for (double v : p.s) total += v * v;
  const double upper = total / (p.L * p.M);
  const auto cap = static_cast<long>(std::ceil(p.L / (1.0 + p.alpha()))) - 1;
  // Singular values from idx on are treated as noise when bounding sigma2 below.
  const auto idx = static_cast<std::size_t>(
      std::clamp<long>(cap, 0, static_cast<long>(L) - 1));
  double tail = 0.0;
  for (std::size_t h = idx; h < L; ++h) tail += p.s[h] * p.s[h];
  tail /= static_cast<double>(L - idx);
  double lower = std::max(p.s[idx] * p.s[idx] / (p.M * p.x_bar()), tail / p.M);
  // Exactly low-rank input has a zero tail; keep the log search finite.
  const double eps = std::numeric_limits<double>::epsilon();
  lower = std::max(lower, upper * eps * eps);
  return {std::min(lower, upper), upper};
}

inline double evbmf_threshold(const EVBMFProblem& p, double sigma2) {
  return std::sqrt(p.M * sigma2 * p.x_bar());
}

inline std::size_t evbmf_rank_at(const EVBMFProblem& p, double sigma2) {
  const double t = evbmf_threshold(p, sigma2);
  return static_cast<std::size_t>(
      std::count_if(p.s.begin(), p.s.end(), [t](double v) { return v > t; }));
}

/// Minimizes the free energy over [lower, upper]. The objective is smooth
/// between the breakpoints sigma2 = s_h^2 / (M x_bar), where a component
/// switches between pruned and retained; each piece is searched separately.
inline double evbmf_optimal_variance(const EVBMFProblem& p) {
  const auto [lower, upper] = evbmf_search_bounds(p);
  if (!(upper > lower)) return upper;
  std::vector<double> cuts{lower, upper};
  for (double sv : p.s) {
    const double b = sv * sv / (p.M * p.x_bar());
    if (b > lower && b < upper) cuts.push_back(b);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  // Searching in log(sigma2) keeps Brent's steps well scaled.
  auto objective = [&p](double log_s2) { return evbmf_free_energy(p, std::exp(log_s2)); };
  double best_x = upper;
  double best_f = evbmf_free_energy(p, upper);
  for (double c : cuts) {
    const double fc = evbmf_free_energy(p, c);
    if (fc < best_f) {
      best_f = fc;
      best_x = c;
    }
  }
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    std::uintmax_t iters = 200;
    const auto [x, fx] = boost::math::tools::brent_find_minima(
        objective, std::log(cuts[i]), std::log(cuts[i + 1]), 52, iters);
    if (fx < best_f) {
      best_f = fx;
      best_x = std::exp(x);
    }
  }
  return best_x;
}

/// Estimate for a problem whose noise variance has already been chosen.
inline EVBMFEstimate evbmf_estimate_at(const EVBMFProblem& p, double sigma2) {
  EVBMFEstimate e;
  e.noise_variance = sigma2;
  e.threshold = evbmf_threshold(p, sigma2);
  const double lm = p.L * p.M;
  for (double sv : p.s) {
    if (!(sv > e.threshold)) break;
    e.retained_singular_values.push_back(sv);
    const double q = 1.0 - (p.L + p.M) * sigma2 / (sv * sv);
    const double disc = q * q - 4.0 * lm * sigma2 * sigma2 / std::pow(sv, 4);
    e.shrunk_singular_values.push_back(0.5 * sv * (q + std::sqrt(std::max(0.0, disc))));
  }
  e.rank = e.retained_singular_values.size();
  return e;
}

inline EVBMFEstimate evbmf_rank(const Matrix2& m) {
  if (m.size() == 0) throw std::invalid_argument("evbmf_rank: empty matrix");
  if (!m.allFinite()) throw std::invalid_argument("evbmf_rank: non-finite input");
  const EVBMFProblem p = make_evbmf_problem(m);
  if (p.s.empty() || p.s.front() == 0.0) {
    EVBMFEstimate e;
    e.degenerate = true;
    return e;
  }
  return evbmf_estimate_at(p, evbmf_optimal_variance(p));
}

}  // namespace musco

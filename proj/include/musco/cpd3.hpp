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
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "musco/linalg.hpp"
#include "musco/tensor.hpp"

namespace musco {

/// Diagnostics of the ALS run that produced a set of CP factors.
struct CPFitInfo {
  double rel_error = std::numeric_limits<double>::quiet_NaN();
  int sweeps = 0;
  bool converged = false;
  int best_start = -1;
  std::vector<double> error_history;  // per sweep, for the winning start
};

/// Reshaped kernel ~= sum_r spatial_r o out_r o in_r.
struct CPFactors {
  Matrix2 factor_spatial;  // d^2 x R
  Matrix2 factor_out;      // C_out x R
  Matrix2 factor_in;       // C_in x R
  CPFitInfo fit;

  std::size_t cp_rank() const { return static_cast<std::size_t>(factor_spatial.cols()); }

  void validate() const {
    if (factor_spatial.cols() < 1 || factor_out.cols() != factor_spatial.cols() ||
        factor_in.cols() != factor_spatial.cols()) {
      throw std::invalid_argument("CPFactors: inconsistent column counts");
    }
  }
};

struct CPOptions {
  double tolerance = 1e-8;
  int max_sweeps = 500;
  // Total number of starts. When hosvd_init is set the first start uses the
  // leading singular vectors of each unfolding; the rest are seeded random.
  int restarts = 3;
  bool hosvd_init = true;
  std::uint64_t seed = 0;
};

namespace detail {

using Factors3 = std::array<Matrix2, 3>;

// Target given as a dense 3-way tensor.
struct DenseCPTarget {
  const DenseTensor& t;
  std::array<Matrix2, 3> unfoldings;
  double norm_sq;

  explicit DenseCPTarget(const DenseTensor& tensor)
      : t(tensor),
        unfoldings{unfold(tensor, 0), unfold(tensor, 1), unfold(tensor, 2)},
        norm_sq(tensor.squared_norm()) {}

  Eigen::Index extent(int mode) const { return unfoldings[mode].rows(); }

  // X_(n) * khatri_rao(others in increasing mode order)
  Matrix2 mttkrp(int mode, const Factors3& f) const {
    const int a = mode == 0 ? 1 : 0;
    const int b = mode == 2 ? 1 : 2;
    return unfoldings[mode] * khatri_rao(f[a], f[b]);
  }

  double rel_error(const Factors3& f) const {
    if (norm_sq == 0.0) return 0.0;
    const Matrix2 approx = f[0] * khatri_rao(f[1], f[2]).transpose();
    return (unfoldings[0] - approx).norm() / std::sqrt(norm_sq);
  }

  Matrix2 basis(int mode, Eigen::Index r) const {
    return leading_left_singular_vectors(unfoldings[mode], r);
  }
};

// Target given implicitly by CP factors; never materialized.
struct ImplicitCPTarget {
  const Factors3& g;
  std::array<Matrix2, 3> grams;
  double norm_sq;

  explicit ImplicitCPTarget(const Factors3& factors)
      : g(factors),
        grams{factors[0].transpose() * factors[0], factors[1].transpose() * factors[1],
              factors[2].transpose() * factors[2]},
        norm_sq(std::max(0.0, grams[0].cwiseProduct(grams[1])
                                  .cwiseProduct(grams[2])
                                  .sum())) {}

  Eigen::Index extent(int mode) const { return g[mode].rows(); }

  Matrix2 mttkrp(int mode, const Factors3& f) const {
    const int a = mode == 0 ? 1 : 0;
    const int b = mode == 2 ? 1 : 2;
    const Matrix2 cross = (g[a].transpose() * f[a]).cwiseProduct(g[b].transpose() * f[b]);
    return g[mode] * cross;
  }

  double rel_error(const Factors3& f) const {
    if (norm_sq == 0.0) return 0.0;
    const Matrix2 inner = (g[0].transpose() * f[0])
                              .cwiseProduct(g[1].transpose() * f[1])
                              .cwiseProduct(g[2].transpose() * f[2]);
    const Matrix2 self = (f[0].transpose() * f[0])
                             .cwiseProduct(f[1].transpose() * f[1])
                             .cwiseProduct(f[2].transpose() * f[2]);
    const double sq = norm_sq - 2.0 * inner.sum() + self.sum();
    return std::sqrt(std::max(0.0, sq) / norm_sq);
  }

  // Left singular vectors of X_(n) = G_n K^T share those of G_n W^{1/2}
  // where W is the Hadamard product of the other two Gram matrices.
  Matrix2 basis(int mode, Eigen::Index r) const {
    const int a = mode == 0 ? 1 : 0;
    const int b = mode == 2 ? 1 : 2;
    Eigen::SelfAdjointEigenSolver<Matrix2> eig(grams[a].cwiseProduct(grams[b]));
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return leading_left_singular_vectors(g[mode] * eig.eigenvectors() * root.asDiagonal(),
                                         r);
  }
};

inline Matrix2 random_factor(Eigen::Index rows, Eigen::Index cols,
                             std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix2 m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

inline Factors3 random_start(const std::array<Eigen::Index, 3>& dims, Eigen::Index r,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Factors3 f;
  for (int n = 0; n < 3; ++n) f[n] = random_factor(dims[n], r, rng);
  return f;
}

template <typename Target>
Factors3 hosvd_start(const Target& target, Eigen::Index r, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Factors3 f;
  for (int n = 0; n < 3; ++n) {
    const Eigen::Index rows = target.extent(n);
    const Eigen::Index k = std::min(r, rows);
    f[n] = Matrix2(rows, r);
    f[n].leftCols(k) = target.basis(n, k);
    if (k < r) f[n].rightCols(r - k) = random_factor(rows, r - k, rng);
  }
  return f;
}

// Equalizes per-column norms across the three factors.
inline void balance_columns(Factors3& f) {
  for (Eigen::Index r = 0; r < f[0].cols(); ++r) {
    std::array<double, 3> n{f[0].col(r).norm(), f[1].col(r).norm(), f[2].col(r).norm()};
    if (n[0] == 0.0 || n[1] == 0.0 || n[2] == 0.0) continue;
    const double g = std::cbrt(n[0] * n[1] * n[2]);
    for (int m = 0; m < 3; ++m) f[m].col(r) *= g / n[m];
  }
}

struct AlsRun {
  Factors3 factors;
  double error;
  int sweeps;
  bool converged;
  std::vector<double> history;
};

template <typename Target>
AlsRun als(const Target& target, Factors3 f, const CPOptions& opts) {
  AlsRun run{f, target.rel_error(f), 0, false, {}};
  double prev = run.error;
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    for (int n = 0; n < 3; ++n) {
      const int a = n == 0 ? 1 : 0;
      const int b = n == 2 ? 1 : 2;
      const Matrix2 gram =
          (f[a].transpose() * f[a]).cwiseProduct(f[b].transpose() * f[b]);
      const Matrix2 rhs = target.mttkrp(n, f);
      f[n] = solve_least_squares(gram, rhs.transpose()).transpose();
    }
    balance_columns(f);
    const double err = target.rel_error(f);
    run.history.push_back(err);
    run.sweeps = sweep;
    if (err < run.error) {
      run.error = err;
      run.factors = f;
    }
    if (std::abs(prev - err) < opts.tolerance || err < 1e-14) {
      run.converged = true;
      break;
    }
    prev = err;
  }
  return run;
}

template <typename Target>
CPFactors best_of(const Target& target, const std::vector<Factors3>& starts,
                  const CPOptions& opts) {
  CPFactors best;
  AlsRun winner{{}, std::numeric_limits<double>::infinity(), 0, false, {}};
  int winner_index = -1;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    AlsRun run = als(target, starts[s], opts);
    if (run.error < winner.error) {
      winner = std::move(run);
      winner_index = static_cast<int>(s);
    }
  }
  best.factor_spatial = std::move(winner.factors[0]);
  best.factor_out = std::move(winner.factors[1]);
  best.factor_in = std::move(winner.factors[2]);
  best.fit = {winner.error, winner.sweeps, winner.converged, winner_index,
              std::move(winner.history)};
  return best;
}

template <typename Target>
std::vector<Factors3> standard_starts(const Target& target, Eigen::Index r,
                                      const CPOptions& opts) {
  std::vector<Factors3> starts;
  const std::array<Eigen::Index, 3> dims{target.extent(0), target.extent(1),
                                         target.extent(2)};
  for (int s = 0; s < std::max(1, opts.restarts); ++s) {
    if (s == 0 && opts.hosvd_init) {
      starts.push_back(hosvd_start(target, r, opts.seed));
    } else {
      starts.push_back(random_start(dims, r, opts.seed + static_cast<std::uint64_t>(s)));
    }
  }
  return starts;
}

}  // namespace detail

/// CP-ALS on a d^2 x C_out x C_in tensor; returns the best start.
inline CPFactors cpd3_decompose(const Kernel3& kernel, std::size_t cp_rank,
                                const CPOptions& opts = {}) {
  if (cp_rank < 1) throw std::invalid_argument("cpd3_decompose: rank must be >= 1");
  const detail::DenseCPTarget target(kernel.tensor());
  const auto r = static_cast<Eigen::Index>(cp_rank);
  return detail::best_of(target, detail::standard_starts(target, r, opts), opts);
}

inline Kernel3 cpd3_reconstruct(const CPFactors& f) {
  f.validate();
  const Matrix2 flat = f.factor_spatial * khatri_rao(f.factor_out, f.factor_in).transpose();
  return Kernel3(fold(flat, 0,
                      {static_cast<std::size_t>(f.factor_spatial.rows()),
                       static_cast<std::size_t>(f.factor_out.rows()),
                       static_cast<std::size_t>(f.factor_in.rows())}));
}

/// Fits rank-R' CP factors to the tensor represented by `f` without forming
/// it. Starts from the R' dominant balanced columns of `f`, then from the same
/// starts cpd3_decompose would use, and keeps the best.
inline CPFactors cpd3_recompress(const CPFactors& f, std::size_t new_rank,
                                 const CPOptions& opts = {}) {
  f.validate();
  if (new_rank < 1 || new_rank > f.cp_rank()) {
    throw std::invalid_argument("cpd3_recompress: new rank " + std::to_string(new_rank) +
                                " outside [1, " + std::to_string(f.cp_rank()) + "]");
  }
  detail::Factors3 current{f.factor_spatial, f.factor_out, f.factor_in};
  detail::balance_columns(current);
  const detail::ImplicitCPTarget target(current);
  const auto r = static_cast<Eigen::Index>(new_rank);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(current[0].cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto weight = [&](Eigen::Index c) {
    return current[0].col(c).norm() * current[1].col(c).norm() * current[2].col(c).norm();
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return weight(a) > weight(b); });
  detail::Factors3 dominant;
  for (int n = 0; n < 3; ++n) {
    dominant[n] = Matrix2(current[n].rows(), r);
    for (Eigen::Index j = 0; j < r; ++j) dominant[n].col(j) = current[n].col(order[j]);
  }

  std::vector<detail::Factors3> starts{std::move(dominant)};
  for (auto& s : detail::standard_starts(target, r, opts)) starts.push_back(std::move(s));
  CPFactors out = detail::best_of(target, starts, opts);
  return out;
}

}  // namespace musco

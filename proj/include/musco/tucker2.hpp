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
#include <stdexcept>
#include <string>

#include "musco/linalg.hpp"
#include "musco/tensor.hpp"

namespace musco {

/// Tucker-2 rank of a conv kernel: ranks of the out- and in-channel unfoldings.
struct MultilinearRank2 {
  std::size_t r_out = 1;
  std::size_t r_in = 1;

  friend bool operator==(const MultilinearRank2&, const MultilinearRank2&) = default;
  bool fits_within(const MultilinearRank2& other) const {
    return r_out <= other.r_out && r_in <= other.r_in;
  }
};

/// kernel ~= core x_out factor_out x_in factor_in, with core d x d x r_out x r_in.
struct Tucker2Factors {
  DenseTensor core;
  Matrix2 factor_out;  // C_out x r_out
  Matrix2 factor_in;   // C_in x r_in
  // Cleared once the factors are trained; governs which recompression
  // guarantee applies.
  bool orthonormal = false;

  MultilinearRank2 rank() const {
    return {static_cast<std::size_t>(factor_out.cols()),
            static_cast<std::size_t>(factor_in.cols())};
  }
  std::size_t d() const { return core.extent(0); }
  std::size_t c_out() const { return static_cast<std::size_t>(factor_out.rows()); }
  std::size_t c_in() const { return static_cast<std::size_t>(factor_in.rows()); }

  void validate() const {
    if (core.modes() != 4 || core.extent(0) != core.extent(1) ||
        core.extent(2) != static_cast<std::size_t>(factor_out.cols()) ||
        core.extent(3) != static_cast<std::size_t>(factor_in.cols())) {
      throw std::invalid_argument("Tucker2Factors: core " +
                                  shape_string(core.shape()) +
                                  " inconsistent with factor ranks");
    }
  }
};

struct Tucker2Options {
  int max_sweeps = 10;     // HOOI sweeps after the HOSVD initialization
  double tolerance = 1e-8; // stop when the relative error changes less
};

namespace detail {

inline void check_tucker_rank(std::size_t c_out, std::size_t c_in,
                              const MultilinearRank2& rank) {
  if (rank.r_out < 1 || rank.r_out > c_out || rank.r_in < 1 || rank.r_in > c_in) {
    throw std::out_of_range("tucker2: rank (" + std::to_string(rank.r_out) + "," +
                            std::to_string(rank.r_in) + ") outside channel extents (" +
                            std::to_string(c_out) + "," + std::to_string(c_in) + ")");
  }
}

inline double tucker_rel_error(double kernel_sq, const DenseTensor& core) {
  if (kernel_sq == 0.0) return 0.0;
  return std::sqrt(std::max(0.0, kernel_sq - core.squared_norm()) / kernel_sq);
}

}  // namespace detail

/// HOSVD initialization followed by HOOI sweeps. Factors come out orthonormal.
inline Tucker2Factors tucker2_decompose(const Kernel4& kernel,
                                        const MultilinearRank2& rank,
                                        const Tucker2Options& opts = {}) {
  detail::check_tucker_rank(kernel.c_out(), kernel.c_in(), rank);
  const DenseTensor& k = kernel.tensor();
  const auto r_out = static_cast<Eigen::Index>(rank.r_out);
  const auto r_in = static_cast<Eigen::Index>(rank.r_in);

  Matrix2 u_out = leading_left_singular_vectors(unfold(k, 2), r_out);
  Matrix2 u_in = leading_left_singular_vectors(unfold(k, 3), r_in);
  auto project = [&] {
    return mode_product(mode_product(k, u_out.transpose(), 2), u_in.transpose(), 3);
  };
  DenseTensor core = project();

  const double kernel_sq = k.squared_norm();
  double err = detail::tucker_rel_error(kernel_sq, core);
  for (int sweep = 0; sweep < opts.max_sweeps && err > 0.0; ++sweep) {
    u_out = leading_left_singular_vectors(
        unfold(mode_product(k, u_in.transpose(), 3), 2), r_out);
    u_in = leading_left_singular_vectors(
        unfold(mode_product(k, u_out.transpose(), 2), 3), r_in);
    core = project();
    const double next = detail::tucker_rel_error(kernel_sq, core);
    const bool converged = std::abs(err - next) < opts.tolerance;
    err = next;
    if (converged) break;
  }
  return {std::move(core), std::move(u_out), std::move(u_in), true};
}

inline Kernel4 tucker2_reconstruct(const Tucker2Factors& f) {
  f.validate();
  return Kernel4(mode_product(mode_product(f.core, f.factor_out, 2), f.factor_in, 3));
}

/// Lowers the rank by decomposing only the core, then folding the core's
/// factors into the existing ones: in' = in * in*, out' = out * out*.
inline Tucker2Factors tucker2_recompress(const Tucker2Factors& f,
                                         const MultilinearRank2& new_rank,
                                         const Tucker2Options& opts = {}) {
  f.validate();
  if (!new_rank.fits_within(f.rank())) {
    throw std::invalid_argument(
        "tucker2_recompress: new rank (" + std::to_string(new_rank.r_out) + "," +
        std::to_string(new_rank.r_in) + ") exceeds current rank (" +
        std::to_string(f.rank().r_out) + "," + std::to_string(f.rank().r_in) + ")");
  }
  Tucker2Factors inner = tucker2_decompose(Kernel4(f.core), new_rank, opts);
  return {std::move(inner.core), f.factor_out * inner.factor_out,
          f.factor_in * inner.factor_in, f.orthonormal};
}

}  // namespace musco

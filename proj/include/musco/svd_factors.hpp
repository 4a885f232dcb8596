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
#include <stdexcept>
#include <string>

#include "musco/linalg.hpp"

namespace musco {

/// W (l_in x l_out) ~= theta_in * theta_out with theta_in = U S, theta_out = V^T.
struct SVDFactors {
  Matrix2 theta_in;   // l_in x R
  Matrix2 theta_out;  // R x l_out

  std::size_t rank() const { return static_cast<std::size_t>(theta_in.cols()); }
  Matrix2 product() const { return theta_in * theta_out; }

  void validate() const {
    if (theta_in.cols() != theta_out.rows() || theta_in.cols() < 1) {
      throw std::invalid_argument("SVDFactors: inner dimensions differ");
    }
  }
};

inline SVDFactors svd_decompose(const Matrix2& w, std::size_t rank) {
  const SVDResult t = truncated_svd(w, static_cast<Eigen::Index>(rank));
  return {t.U * t.S.asDiagonal(), t.V.transpose()};
}

/// Truncated SVD of theta_in * theta_out through QR of both factors and an
/// SVD of the small R x R middle matrix.
inline SVDFactors svd_recompress(const SVDFactors& f, std::size_t new_rank) {
  f.validate();
  if (new_rank < 1 || new_rank > f.rank()) {
    throw std::invalid_argument("svd_recompress: new rank " + std::to_string(new_rank) +
                                " outside [1, " + std::to_string(f.rank()) + "]");
  }
  const ThinQR left = thin_qr(f.theta_in);
  const ThinQR right = thin_qr(f.theta_out.transpose());
  const Matrix2 middle = left.R * right.R.transpose();
  const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(new_rank),
                                        std::min(middle.rows(), middle.cols()));
  const SVDResult s = truncated_svd(middle, k);
  SVDFactors out{left.Q * s.U * s.S.asDiagonal(), (right.Q * s.V).transpose()};
  if (static_cast<std::size_t>(k) < new_rank) {
    // Factors thinner than the requested rank: pad with zero directions.
    const auto pad = static_cast<Eigen::Index>(new_rank) - k;
    Matrix2 in(out.theta_in.rows(), k + pad);
    in << out.theta_in, Matrix2::Zero(out.theta_in.rows(), pad);
    Matrix2 outm(k + pad, out.theta_out.cols());
    outm << out.theta_out, Matrix2::Zero(pad, out.theta_out.cols());
    out = {std::move(in), std::move(outm)};
  }
  return out;
}

}  // namespace musco

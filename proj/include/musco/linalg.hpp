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

#include <Eigen/Dense>

#include "musco/tensor.hpp"

namespace musco {

/// Thin SVD m = U diag(S) V^T with k = min(rows, cols) columns.
struct SVDResult {
  Matrix2 U;
  Vector S;
  Matrix2 V;

  Eigen::Index rank() const { return S.size(); }
  Matrix2 reconstruct() const { return U * S.asDiagonal() * V.transpose(); }
};

namespace detail {

inline void require_finite(const Matrix2& m, const char* who) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(who) + ": non-finite input");
  }
}

// Flip (U_j, V_j) pairs so the largest-magnitude entry of U_j is positive.
inline void canonicalize_signs(SVDResult& r) {
  for (Eigen::Index j = 0; j < r.U.cols(); ++j) {
    Eigen::Index arg = 0;
    r.U.col(j).cwiseAbs().maxCoeff(&arg);
    if (r.U(arg, j) < 0.0) {
      r.U.col(j) *= -1.0;
      r.V.col(j) *= -1.0;
    }
  }
}

}  // namespace detail

inline SVDResult svd(const Matrix2& m) {
  detail::require_finite(m, "svd");
  Eigen::BDCSVD<Matrix2> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SVDResult r{solver.matrixU(), solver.singularValues(), solver.matrixV()};
  detail::canonicalize_signs(r);
  return r;
}

/// Best rank-r approximation in Frobenius norm (Eckart-Young).
inline SVDResult truncated_svd(const Matrix2& m, Eigen::Index r) {
  const Eigen::Index k = std::min(m.rows(), m.cols());
  if (r < 1 || r > k) {
    throw std::out_of_range("truncated_svd: rank " + std::to_string(r) +
                            " outside [1, " + std::to_string(k) + "]");
  }
  SVDResult full = svd(m);
  return {full.U.leftCols(r), full.S.head(r), full.V.leftCols(r)};
}

/// Leading r left singular vectors of m, for any 1 <= r <= rows. When r
/// exceeds the column count the basis is completed from the full U.
inline Matrix2 leading_left_singular_vectors(const Matrix2& m, Eigen::Index r) {
  if (r < 1 || r > m.rows()) {
    throw std::out_of_range("leading_left_singular_vectors: rank " +
                            std::to_string(r) + " outside [1, " +
                            std::to_string(m.rows()) + "]");
  }
  if (r <= m.cols()) return truncated_svd(m, r).U;
  detail::require_finite(m, "leading_left_singular_vectors");
  Eigen::BDCSVD<Matrix2> solver(m, Eigen::ComputeFullU);
  Matrix2 u = solver.matrixU().leftCols(r);
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index arg = 0;
    u.col(j).cwiseAbs().maxCoeff(&arg);
    if (u(arg, j) < 0.0) u.col(j) *= -1.0;
  }
  return u;
}

/// Minimum-norm minimizer of ||A X - B||_F. Singular values below
/// 1e-12 * sigma_max are treated as zero.
inline Matrix2 solve_least_squares(const Matrix2& A, const Matrix2& B) {
  if (A.rows() != B.rows()) {
    throw std::invalid_argument("solve_least_squares: A has " +
                                std::to_string(A.rows()) + " rows, B has " +
                                std::to_string(B.rows()));
  }
  const SVDResult d = svd(A);
  const double cutoff = d.S.size() ? 1e-12 * d.S(0) : 0.0;
  Vector inv = Vector::Zero(d.S.size());
  for (Eigen::Index i = 0; i < d.S.size(); ++i) {
    if (d.S(i) > cutoff) inv(i) = 1.0 / d.S(i);
  }
  return d.V * (inv.asDiagonal() * (d.U.transpose() * B));
}

/// Column-wise Khatri-Rao product. Column r is vec(a_r o b_r) with the index
/// into A varying fastest: row i + rows(A) * j holds A(i, r) * B(j, r).
/// With this ordering unfold([[F0, F1, F2]], 0) == F0 * khatri_rao(F1, F2)^T.
inline Matrix2 khatri_rao(const Matrix2& A, const Matrix2& B) {
  if (A.cols() != B.cols()) {
    throw std::invalid_argument("khatri_rao: column counts differ (" +
                                std::to_string(A.cols()) + " vs " +
                                std::to_string(B.cols()) + ")");
  }
  Matrix2 out(A.rows() * B.rows(), A.cols());
  for (Eigen::Index r = 0; r < A.cols(); ++r) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      out.col(r).segment(j * A.rows(), A.rows()) = A.col(r) * B(j, r);
    }
  }
  return out;
}

struct ThinQR {
  Matrix2 Q;  // rows x k, orthonormal columns
  Matrix2 R;  // k x cols, upper triangular
};

inline ThinQR thin_qr(const Matrix2& m) {
  const Eigen::Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Matrix2> qr(m);
  Matrix2 q = qr.householderQ() * Matrix2::Identity(m.rows(), k);
  Matrix2 r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return {std::move(q), std::move(r)};
}

}  // namespace musco

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

#include <gtest/gtest.h>

#include "musco/cpd3.hpp"
#include "musco/linalg.hpp"
#include "test_util.hpp"

namespace musco {
namespace {

using testing::random_matrix;

void expect_orthonormal(const Matrix2& q, double tol) {
  const Matrix2 gram = q.transpose() * q;
  EXPECT_LE((gram - Matrix2::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff(), tol);
}

TEST(Svd, IdentityAndDiagonal) {
  EXPECT_LE((svd(Matrix2::Identity(4, 4)).S - Vector::Ones(4)).norm(), 1e-14);
  Matrix2 d = Matrix2::Zero(3, 3);
  d.diagonal() << 1, 3, 2;
  const SVDResult r = svd(d);
  EXPECT_NEAR(r.S(0), 3, 1e-14);
  EXPECT_NEAR(r.S(1), 2, 1e-14);
  EXPECT_NEAR(r.S(2), 1, 1e-14);
}

TEST(Svd, RandomReconstructionAndContract) {
  const Matrix2 m = random_matrix(50, 30, 7);
  const SVDResult r = svd(m);
  EXPECT_LE(rel_error(m, r.reconstruct()), 1e-10);
  expect_orthonormal(r.U, 1e-10);
  expect_orthonormal(r.V, 1e-10);
  for (Eigen::Index i = 0; i + 1 < r.S.size(); ++i) EXPECT_GE(r.S(i), r.S(i + 1));
  EXPECT_GE(r.S.minCoeff(), 0.0);
  for (Eigen::Index j = 0; j < r.U.cols(); ++j) {
    Eigen::Index arg;
    r.U.col(j).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(r.U(arg, j), 0.0);
  }
}

TEST(Svd, BitDeterministic) {
  const Matrix2 m = random_matrix(40, 25, 8);
  const SVDResult a = svd(m);
  const SVDResult b = svd(m);
  EXPECT_EQ(a.U, b.U);
  EXPECT_EQ(a.S, b.S);
  EXPECT_EQ(a.V, b.V);
}

TEST(Svd, RejectsNonFinite) {
  Matrix2 m = Matrix2::Ones(2, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(svd(m), std::invalid_argument);
}

TEST(TruncatedSvd, TailEnergyLaw) {
  Matrix2 d = Matrix2::Zero(3, 3);
  d.diagonal() << 3, 2, 1;
  EXPECT_NEAR((d - truncated_svd(d, 2).reconstruct()).norm(), 1.0, 1e-12);
  EXPECT_LE(rel_error(d, truncated_svd(d, 3).reconstruct()), 1e-14);
  EXPECT_THROW(truncated_svd(d, 0), std::out_of_range);
  EXPECT_THROW(truncated_svd(d, 4), std::out_of_range);

  const Matrix2 m = random_matrix(30, 20, 3);
  const Vector s = svd(m).S;
  for (Eigen::Index r = 1; r <= 20; ++r) {
    const double err2 = (m - truncated_svd(m, r).reconstruct()).squaredNorm();
    const double tail = s.tail(20 - r).squaredNorm();
    EXPECT_NEAR(err2, tail, 1e-8 * std::max(tail, 1e-8 * s.squaredNorm()));
  }
}

TEST(TruncatedSvd, PlantedRankThree) {
  const Matrix2 m = random_matrix(100, 3, 1) * random_matrix(3, 40, 2);
  EXPECT_LE(rel_error(m, truncated_svd(m, 3).reconstruct()), 1e-10);
}

TEST(LeadingLeftSingularVectors, CompletesBasisBeyondColumns) {
  const Matrix2 m = random_matrix(6, 2, 4);
  const Matrix2 u = leading_left_singular_vectors(m, 5);
  EXPECT_EQ(u.cols(), 5);
  expect_orthonormal(u, 1e-12);
}

TEST(LeastSquares, IdentityAndConsistentSystem) {
  const Matrix2 b = random_matrix(5, 3, 1);
  EXPECT_LE((solve_least_squares(Matrix2::Identity(5, 5), b) - b).norm(), 1e-12);

  const Matrix2 a = random_matrix(40, 6, 2);
  const Matrix2 x = random_matrix(6, 3, 3);
  EXPECT_LE(rel_error(x, solve_least_squares(a, a * x)), 1e-10);
  EXPECT_THROW(solve_least_squares(a, Matrix2::Zero(39, 1)), std::invalid_argument);
}

TEST(LeastSquares, RankDeficientMinimumNorm) {
  const Matrix2 a = random_matrix(20, 3, 4) * random_matrix(3, 6, 5);  // rank 3
  const Matrix2 b = random_matrix(20, 2, 6);
  const Matrix2 x = solve_least_squares(a, b);
  // Oracle: pseudoinverse assembled from a full SVD with an explicit rank.
  Eigen::JacobiSVD<Matrix2> full(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix2 pinv = Matrix2::Zero(6, 20);
  for (int i = 0; i < 3; ++i) {
    pinv += full.matrixV().col(i) * full.matrixU().col(i).transpose() /
            full.singularValues()(i);
  }
  const Matrix2 x_oracle = pinv * b;
  EXPECT_LE(rel_error(x_oracle, x), 1e-8);
  const Matrix2 residual = a * x - b;
  const Matrix2 projection_residual = (a * pinv - Matrix2::Identity(20, 20)) * b;
  EXPECT_LE(rel_error(projection_residual, residual), 1e-8);
}

TEST(LeastSquares, ResidualOrthogonalToColumnSpace) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix2 a = random_matrix(30, 5, seed);
    const Matrix2 b = random_matrix(30, 2, seed + 50);
    const Matrix2 r = a * solve_least_squares(a, b) - b;
    EXPECT_LE((a.transpose() * r).cwiseAbs().maxCoeff(), 1e-8 * a.norm() * b.norm());
  }
}

TEST(KhatriRao, BasisCases) {
  Matrix2 a(2, 1), b(3, 1);
  a << 1, 2;
  b << 3, 4, 5;
  Matrix2 expected(6, 1);
  expected << 3, 6, 4, 8, 5, 10;
  EXPECT_EQ(khatri_rao(a, b), expected);

  Matrix2 sel(4, 2);
  sel << 1, 0, 0, 0, 0, 0, 0, 1;
  EXPECT_EQ(khatri_rao(Matrix2::Identity(2, 2), Matrix2::Identity(2, 2)), sel);
  EXPECT_THROW(khatri_rao(Matrix2::Zero(2, 2), Matrix2::Zero(2, 3)), std::invalid_argument);
}

TEST(KhatriRao, MatchesCpUnfolding) {
  CPFactors f{random_matrix(4, 3, 1), random_matrix(5, 3, 2), random_matrix(6, 3, 3), {}};
  const DenseTensor t = cpd3_reconstruct(f).tensor();
  // Oracle: the CP sum evaluated entry by entry.
  DenseTensor direct({4, 5, 6});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 6; ++k)
        for (int r = 0; r < 3; ++r)
          direct(i, j, k) += f.factor_spatial(i, r) * f.factor_out(j, r) * f.factor_in(k, r);
  EXPECT_LE(rel_error(direct, t), 1e-12);
  const Matrix2 u0 = f.factor_spatial * khatri_rao(f.factor_out, f.factor_in).transpose();
  EXPECT_LE(rel_error(unfold(direct, 0), u0), 1e-12);
  const Matrix2 u1 = f.factor_out * khatri_rao(f.factor_spatial, f.factor_in).transpose();
  EXPECT_LE(rel_error(unfold(direct, 1), u1), 1e-12);
}

TEST(ThinQr, Factorizes) {
  const Matrix2 m = random_matrix(12, 4, 9);
  const ThinQR qr = thin_qr(m);
  expect_orthonormal(qr.Q, 1e-12);
  EXPECT_LE(rel_error(m, qr.Q * qr.R), 1e-12);
}

}  // namespace
}  // namespace musco

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

#include "musco/svd_factors.hpp"
#include "test_util.hpp"

namespace musco {
namespace {

using testing::random_matrix;

TEST(SvdDecompose, FullRankAndDiagonal) {
  const Matrix2 w = random_matrix(7, 5, 1);
  EXPECT_LE(rel_error(w, svd_decompose(w, 5).product()), 1e-12);

  Matrix2 d = Matrix2::Zero(3, 3);
  d.diagonal() << 3, 2, 1;
  Matrix2 expected = Matrix2::Zero(3, 3);
  expected.diagonal() << 3, 2, 0;
  EXPECT_LE((svd_decompose(d, 2).product() - expected).norm(), 1e-12);
  EXPECT_THROW(svd_decompose(d, 4), std::out_of_range);
}

TEST(SvdDecompose, ErrorEqualsTailEnergy) {
  const Matrix2 w = random_matrix(64, 32, 2);
  const SVDFactors f = svd_decompose(w, 10);
  EXPECT_EQ(f.theta_in.rows(), 64);
  EXPECT_EQ(f.theta_out.cols(), 32);
  const Vector s = svd(w).S;
  EXPECT_NEAR((w - f.product()).squaredNorm(), s.tail(22).squaredNorm(),
              1e-8 * s.tail(22).squaredNorm());
  EXPECT_LE(rel_error(truncated_svd(w, 10).reconstruct(), f.product()), 1e-12);
}

TEST(SvdRecompress, SameRankUnchanged) {
  const SVDFactors f{random_matrix(30, 6, 3), random_matrix(6, 20, 4)};
  EXPECT_LE(rel_error(f.product(), svd_recompress(f, 6).product()), 1e-12);
}

TEST(SvdRecompress, MatchesTruncationOfProduct) {
  const SVDFactors f{random_matrix(512, 20, 5), random_matrix(20, 512, 6)};
  const SVDFactors g = svd_recompress(f, 5);
  EXPECT_EQ(g.rank(), 5u);
  const Matrix2 naive = truncated_svd(f.product(), 5).reconstruct();
  EXPECT_LE(rel_error(naive, g.product()), 1e-10);
}

TEST(SvdRecompress, PlantedRankDeficientIsExact) {
  const Matrix2 inner = random_matrix(8, 3, 7) * random_matrix(3, 8, 8);
  const SVDFactors f{random_matrix(40, 8, 9) * inner, random_matrix(8, 30, 10)};
  EXPECT_LE(rel_error(f.product(), svd_recompress(f, 3).product()), 1e-10);
  EXPECT_THROW(svd_recompress(f, 9), std::invalid_argument);
}

}  // namespace
}  // namespace musco

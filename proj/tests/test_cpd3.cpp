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
#include "test_util.hpp"

namespace musco {
namespace {

using testing::random_matrix;

CPFactors planted(Eigen::Index d2, Eigen::Index c_out, Eigen::Index c_in, Eigen::Index r,
                  std::uint64_t seed) {
  return {random_matrix(d2, r, seed), random_matrix(c_out, r, seed + 1),
          random_matrix(c_in, r, seed + 2), {}};
}

double error_of(const DenseTensor& t, const CPFactors& f) {
  return rel_error(t, cpd3_reconstruct(f).tensor());
}

TEST(Cpd3Decompose, RecoversPlantedRankFive) {
  const Kernel3 k = cpd3_reconstruct(planted(9, 12, 10, 5, 1));
  const CPFactors f = cpd3_decompose(k, 5);
  EXPECT_EQ(f.cp_rank(), 5u);
  EXPECT_LE(error_of(k.tensor(), f), 1e-6);
  EXPECT_LE(f.fit.sweeps, 500);
}

TEST(Cpd3Decompose, RankOneOuterProductExact) {
  const Kernel3 k = cpd3_reconstruct(planted(4, 6, 5, 1, 3));
  const CPFactors f = cpd3_decompose(k, 1);
  EXPECT_LE(error_of(k.tensor(), f), 1e-10);
}

TEST(Cpd3Decompose, ErrorHistoryMonotone) {
  const Kernel3 k(testing::random_tensor({9, 8, 7}, 4));
  CPOptions opts;
  opts.restarts = 1;
  opts.hosvd_init = false;
  opts.max_sweeps = 100;
  const CPFactors f = cpd3_decompose(k, 4, opts);
  ASSERT_FALSE(f.fit.error_history.empty());
  for (std::size_t i = 1; i < f.fit.error_history.size(); ++i)
    EXPECT_LE(f.fit.error_history[i], f.fit.error_history[i - 1] + 1e-12);
  EXPECT_NEAR(f.fit.rel_error, error_of(k.tensor(), f), 1e-12);
}

TEST(Cpd3Decompose, NormBalancedColumns) {
  const Kernel3 k(testing::random_tensor({9, 8, 7}, 5));
  const CPFactors f = cpd3_decompose(k, 3);
  for (Eigen::Index r = 0; r < 3; ++r) {
    EXPECT_NEAR(f.factor_spatial.col(r).norm(), f.factor_out.col(r).norm(), 1e-9);
    EXPECT_NEAR(f.factor_out.col(r).norm(), f.factor_in.col(r).norm(), 1e-9);
  }
}

TEST(Cpd3Decompose, RejectsZeroRank) {
  EXPECT_THROW(cpd3_decompose(Kernel3(DenseTensor({1, 2, 2})), 0), std::invalid_argument);
}

TEST(Cpd3Reconstruct, SingleColumnAndScaleIndeterminacy) {
  const CPFactors one = planted(4, 3, 2, 1, 7);
  const DenseTensor t = cpd3_reconstruct(one).tensor();
  EXPECT_NEAR(t(1, 2, 1), one.factor_spatial(1, 0) * one.factor_out(2, 0) * one.factor_in(1, 0),
              1e-14);

  CPFactors f = planted(9, 5, 4, 3, 8);
  CPFactors g = f;
  g.factor_out.col(1) *= 4.0;
  g.factor_in.col(1) *= 0.25;
  EXPECT_LE(rel_error(cpd3_reconstruct(f).tensor(), cpd3_reconstruct(g).tensor()), 1e-14);
}

TEST(Cpd3Recompress, SameRankReproducesTensor) {
  const CPFactors f = planted(9, 10, 8, 4, 11);
  const CPFactors g = cpd3_recompress(f, 4);
  EXPECT_LE(rel_error(cpd3_reconstruct(f).tensor(), cpd3_reconstruct(g).tensor()), 1e-8);
}

TEST(Cpd3Recompress, RedundantFactorsCollapse) {
  // A rank-3 tensor stored with 5 columns: two columns are split copies.
  CPFactors base = planted(9, 10, 8, 3, 12);
  CPFactors f;
  f.factor_spatial = Matrix2(9, 5);
  f.factor_out = Matrix2(10, 5);
  f.factor_in = Matrix2(8, 5);
  f.factor_spatial << base.factor_spatial, base.factor_spatial.leftCols(2);
  f.factor_out << base.factor_out, base.factor_out.leftCols(2);
  f.factor_in << base.factor_in.col(0) * 0.4, base.factor_in.col(1) * 0.7,
      base.factor_in.col(2), base.factor_in.col(0) * 0.6, base.factor_in.col(1) * 0.3;
  const DenseTensor t = cpd3_reconstruct(f).tensor();
  EXPECT_LE(rel_error(cpd3_reconstruct(base).tensor(), t), 1e-12);
  const CPFactors g = cpd3_recompress(f, 3);
  EXPECT_EQ(g.cp_rank(), 3u);
  EXPECT_LE(error_of(t, g), 1e-6);
}

TEST(Cpd3Recompress, NoWorseThanNaivePath) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const CPFactors f = planted(9, 12, 10, 6, 20 + seed);
    const Kernel3 full = cpd3_reconstruct(f);
    for (std::size_t r : {1u, 3u}) {
      const double direct = error_of(full.tensor(), cpd3_recompress(f, r));
      const double naive = error_of(full.tensor(), cpd3_decompose(full, r));
      EXPECT_LE(direct, naive + 1e-6);
      if (r == 1) {
        EXPECT_NEAR(direct, naive, 1e-6);
      }
    }
  }
}

TEST(Cpd3Recompress, RejectsRankIncrease) {
  EXPECT_THROW(cpd3_recompress(planted(4, 3, 3, 2, 1), 3), std::invalid_argument);
}

}  // namespace
}  // namespace musco

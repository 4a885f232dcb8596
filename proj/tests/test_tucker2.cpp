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

#include "musco/tucker2.hpp"
#include "test_util.hpp"

namespace musco {
namespace {

using testing::random_orthonormal;
using testing::random_tensor;

Tucker2Factors planted(std::size_t d, std::size_t c_out, std::size_t c_in,
                       MultilinearRank2 r, std::uint64_t seed) {
  return {random_tensor({d, d, r.r_out, r.r_in}, seed),
          random_orthonormal(static_cast<Eigen::Index>(c_out),
                             static_cast<Eigen::Index>(r.r_out), seed + 1),
          random_orthonormal(static_cast<Eigen::Index>(c_in),
                             static_cast<Eigen::Index>(r.r_in), seed + 2),
          true};
}

std::size_t numerical_rank(const Matrix2& m) {
  const Vector s = svd(m).S;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-10 * s(0)) ++r;
  return r;
}

void expect_orthonormal(const Matrix2& q) {
  EXPECT_LE((q.transpose() * q - Matrix2::Identity(q.cols(), q.cols())).norm(), 1e-8);
}

TEST(Tucker2Decompose, RecoversPlantedKernel) {
  const Kernel4 k = tucker2_reconstruct(planted(3, 12, 10, {4, 3}, 5));
  const Tucker2Factors f = tucker2_decompose(k, {4, 3});
  EXPECT_TRUE(f.orthonormal);
  expect_orthonormal(f.factor_out);
  expect_orthonormal(f.factor_in);
  EXPECT_EQ(f.core.shape(), (Shape{3, 3, 4, 3}));
  EXPECT_LE(rel_error(k.tensor(), tucker2_reconstruct(f).tensor()), 1e-10);
}

TEST(Tucker2Decompose, FullRankIsExact) {
  const Kernel4 k(random_tensor({3, 3, 6, 5}, 2));
  const Tucker2Factors f = tucker2_decompose(k, {6, 5});
  EXPECT_LE(rel_error(k.tensor(), tucker2_reconstruct(f).tensor()), 1e-10);
}

TEST(Tucker2Decompose, PointwiseKernelReducesToSvd) {
  const Kernel4 k(random_tensor({1, 1, 8, 8}, 3));
  const Tucker2Factors f = tucker2_decompose(k, {2, 2});
  const Matrix2 w = unfold(k.tensor(), 2);  // 8 x 8, rows = out channels
  const double svd_err = (w - truncated_svd(w, 2).reconstruct()).norm();
  const double tucker_err = (k.tensor().frobenius_norm()) *
                            rel_error(k.tensor(), tucker2_reconstruct(f).tensor());
  EXPECT_NEAR(tucker_err, svd_err, 1e-10 * w.norm());
}

TEST(Tucker2Decompose, RankChecks) {
  const Kernel4 k(random_tensor({3, 3, 6, 5}, 2));
  EXPECT_THROW(tucker2_decompose(k, {7, 5}), std::out_of_range);
  EXPECT_THROW(tucker2_decompose(k, {0, 5}), std::out_of_range);
}

TEST(Tucker2Decompose, RankExceedingOtherModesProduct) {
  // 1x1 kernel with C_out > C_in: the out-mode unfolding has fewer columns than r_out.
  const Kernel4 k(random_tensor({1, 1, 16, 3}, 8));
  const Tucker2Factors f = tucker2_decompose(k, {16, 3});
  EXPECT_LE(rel_error(k.tensor(), tucker2_reconstruct(f).tensor()), 1e-10);
}

TEST(Tucker2Decompose, ErrorWithinHosvdBound) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Kernel4 k(random_tensor({3, 3, 10, 9}, seed));
    const MultilinearRank2 r{4, 5};
    const Tucker2Factors f = tucker2_decompose(k, r);
    const double err2 =
        std::pow(rel_error(k.tensor(), tucker2_reconstruct(f).tensor()), 2) *
        k.tensor().squared_norm();
    const Vector s_out = svd(unfold(k.tensor(), 2)).S;
    const Vector s_in = svd(unfold(k.tensor(), 3)).S;
    const double bound = s_out.tail(s_out.size() - 4).squaredNorm() +
                         s_in.tail(s_in.size() - 5).squaredNorm();
    EXPECT_LE(err2, bound * (1 + 1e-10));
  }
}

TEST(Tucker2Reconstruct, IdentityFactorsGiveCore) {
  const DenseTensor core = random_tensor({3, 3, 4, 5}, 1);
  const Tucker2Factors f{core, Matrix2::Identity(4, 4), Matrix2::Identity(5, 5), true};
  EXPECT_LE(rel_error(core, tucker2_reconstruct(f).tensor()), 1e-15);
}

TEST(Tucker2Reconstruct, MultilinearRankBounded) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tucker2Factors f{random_tensor({3, 3, 4, 6}, seed),
                     testing::random_matrix(15, 4, seed + 1),
                     testing::random_matrix(12, 6, seed + 2), false};
    const DenseTensor k = tucker2_reconstruct(f).tensor();
    EXPECT_LE(numerical_rank(unfold(k, 2)), 4u);
    EXPECT_LE(numerical_rank(unfold(k, 3)), 6u);
  }
}

TEST(Tucker2Recompress, SameRankIsLossless) {
  const Tucker2Factors f = planted(3, 16, 12, {6, 5}, 9);
  const Tucker2Factors g = tucker2_recompress(f, {6, 5});
  EXPECT_LE(rel_error(tucker2_reconstruct(f).tensor(), tucker2_reconstruct(g).tensor()),
            1e-10);
}

TEST(Tucker2Recompress, MatchesNaivePathForOrthonormalFactors) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tucker2Factors f = planted(3, 20, 18, {8, 8}, 100 + seed);
    const Tucker2Factors core_path = tucker2_recompress(f, {3, 5});
    const Tucker2Factors naive = tucker2_decompose(tucker2_reconstruct(f), {3, 5});
    EXPECT_EQ(core_path.rank(), (MultilinearRank2{3, 5}));
    expect_orthonormal(core_path.factor_out);
    expect_orthonormal(core_path.factor_in);
    EXPECT_LE(rel_error(tucker2_reconstruct(naive).tensor(),
                        tucker2_reconstruct(core_path).tensor()),
              1e-10);
  }
}

TEST(Tucker2Recompress, NonOrthonormalFactorsNoBetterThanNaive) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tucker2Factors f = planted(3, 20, 18, {8, 8}, 200 + seed);
    f.factor_out += 0.3 * testing::random_matrix(20, 8, seed + 7);
    f.factor_in += 0.3 * testing::random_matrix(18, 8, seed + 8);
    f.orthonormal = false;
    const DenseTensor full = tucker2_reconstruct(f).tensor();
    const double core_err =
        rel_error(full, tucker2_reconstruct(tucker2_recompress(f, {3, 5})).tensor());
    const double naive_err =
        rel_error(full, tucker2_reconstruct(tucker2_decompose(Kernel4(full), {3, 5})).tensor());
    EXPECT_GE(core_err, naive_err - 1e-12);
    EXPECT_FALSE(tucker2_recompress(f, {3, 5}).orthonormal);
  }
}

TEST(Tucker2Recompress, RejectsRankIncrease) {
  const Tucker2Factors f = planted(3, 10, 10, {4, 4}, 1);
  EXPECT_THROW(tucker2_recompress(f, {5, 4}), std::invalid_argument);
}

}  // namespace
}  // namespace musco

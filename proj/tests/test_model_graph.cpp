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

#include "graph_oracle.hpp"
#include "musco/analysis.hpp"
#include "musco/model_zoo.hpp"
#include "musco/trainer.hpp"
#include "test_util.hpp"

namespace musco {
namespace {

using testing::naive_conv;
using testing::random_activation;

ModelGraph single_conv(ActShape in, std::size_t c_out, std::size_t d, std::size_t stride,
                       std::size_t pad, std::uint64_t seed) {
  ModelGraph g;
  g.input = in;
  g.add(make_conv("conv", in.c, c_out, d, stride, pad));
  testing::randomize(g, seed);
  return g;
}

double max_abs_diff(const RowMatrix& a, const RowMatrix& b) {
  EXPECT_EQ(a.rows(), b.rows());
  EXPECT_EQ(a.cols(), b.cols());
  return (a - b).cwiseAbs().maxCoeff();
}

TEST(InferShapes, StandardArithmetic) {
  const auto stem = infer_shapes(resnet_stem());
  EXPECT_EQ(stem[1], (ActShape{112, 112, 64}));

  ModelGraph g;
  g.input = {224, 224, 3};
  g.add(make_conv("pw", 3, 8, 1));
  g.add(make_maxpool("pool"));
  g.add(make_simple("flat", LayerKind::flatten));
  const auto s = infer_shapes(g);
  EXPECT_EQ(s[1], (ActShape{224, 224, 8}));
  EXPECT_EQ(s[2], (ActShape{112, 112, 8}));
  EXPECT_EQ(s[3], (ActShape{1, 1, 112 * 112 * 8}));
}

TEST(InferShapes, IncompatibleAdjacentLayers) {
  ModelGraph g;
  g.input = {8, 8, 3};
  g.add(make_conv("a", 3, 4, 3, 1, 1));
  g.add(make_conv("b", 5, 4, 3, 1, 1));
  EXPECT_THROW(infer_shapes(g), std::invalid_argument);

  ModelGraph h;
  h.input = {8, 8, 3};
  h.add(make_fc("fc", 192, 10));  // needs a flatten first
  EXPECT_THROW(infer_shapes(h), std::invalid_argument);
}

TEST(CountFlops, VggAndResnetOriginalLayers) {
  const ModelGraph vgg = vgg16_conv_stack();
  const ModelCost c = count_costs(vgg);
  std::vector<long> mf;
  for (std::size_t i = 0; i < vgg.layers.size(); ++i)
    if (vgg.layers[i].kind == LayerKind::conv2d) mf.push_back(mflops(c.layers[i].macs));
  EXPECT_EQ(mf, (std::vector<long>{87, 1850, 925, 1850, 925, 1850, 1850, 925, 1850, 1850, 462, 462, 462}));
  EXPECT_EQ(c.layers[0].macs, 86704128u);
  EXPECT_EQ(c.layers[2].macs, 1849688064u);
  EXPECT_EQ(count_flops(resnet_stem()), 118013952u);
}

TEST(CountParams, ExactCounts) {
  ModelGraph g;
  g.input = {14, 14, 512};
  g.add(make_conv("conv", 512, 512, 3, 1, 1, false));
  EXPECT_EQ(count_params(g).weights, 2359296u);

  const Tucker2Factors f{DenseTensor({3, 3, 139, 139}), Matrix2::Zero(512, 139),
                         Matrix2::Zero(512, 139), false};
  const ModelGraph t = substitute_conv_tucker2(g, g.layers[0].id, f);
  EXPECT_EQ(count_params(t).weights, 316225u);

  ModelGraph fc;
  fc.input = {1, 1, 4096};
  fc.add(make_fc("fc", 4096, 1000));
  EXPECT_EQ(count_params(fc).weights, 4096000u);
  EXPECT_EQ(count_params(fc).biases, 1000u);
}

TEST(SubstituteTucker2, FullRankIsExact) {
  const ModelGraph g = single_conv({9, 9, 6}, 5, 3, 1, 1, 1);
  const Kernel4 k(g.layers[0].kernel);
  const ModelGraph t = substitute_conv_tucker2(g, g.layers[0].id, tucker2_decompose(k, {5, 6}));
  const Activation x = random_activation(3, g.input, 2);
  EXPECT_LT(max_abs_diff(forward(g, x), forward(t, x)), 1e-10);
  EXPECT_EQ(t.layers.size(), 3u);
  EXPECT_FALSE(t.layers[0].bias);
  EXPECT_TRUE(t.layers[2].bias);
}

TEST(SubstituteTucker2, MatchesReconstructedKernel) {
  const ModelGraph g = single_conv({8, 8, 64}, 64, 3, 1, 1, 3);
  const Tucker2Factors f = tucker2_decompose(Kernel4(g.layers[0].kernel), {8, 8});
  const ModelGraph t = substitute_conv_tucker2(g, g.layers[0].id, f);
  const Activation x = random_activation(2, g.input, 4);
  const Activation ref =
      naive_conv(x, tucker2_reconstruct(f).tensor(), 1, 1, 1, &*g.layers[0].bias);
  EXPECT_LT(max_abs_diff(forward(t, x), ref.data), 1e-9);
}

TEST(SubstituteTucker2, StridePlacementAndFlops) {
  const ModelGraph g = single_conv({16, 16, 24}, 32, 3, 2, 1, 5);
  const Tucker2Factors f = tucker2_decompose(Kernel4(g.layers[0].kernel), {7, 5});
  const ModelGraph t = substitute_conv_tucker2(g, g.layers[0].id, f);
  EXPECT_EQ(t.layers[0].stride, 1u);
  EXPECT_EQ(t.layers[1].stride, 2u);
  EXPECT_EQ(t.layers[1].padding, 1u);
  EXPECT_EQ(t.layers[2].stride, 1u);
  // H W C_in r_in + H' W' (d^2 r_in r_out + r_out C_out)
  EXPECT_EQ(count_flops(t), 16u * 16 * 24 * 5 + 8u * 8 * (9 * 5 * 7 + 7 * 32));
  const Activation x = random_activation(2, g.input, 6);
  const Activation ref = naive_conv(x, tucker2_reconstruct(f).tensor(), 2, 1, 1, &*g.layers[0].bias);
  EXPECT_LT(max_abs_diff(forward(t, x), ref.data), 1e-9);
}

TEST(SubstituteTucker2, RejectsDecomposedOrWrongTarget) {
  const ModelGraph g = single_conv({6, 6, 4}, 4, 3, 1, 1, 7);
  const Tucker2Factors f = tucker2_decompose(Kernel4(g.layers[0].kernel), {2, 2});
  const ModelGraph t = substitute_conv_tucker2(g, g.layers[0].id, f);
  for (const auto& l : t.layers) EXPECT_THROW(substitute_conv_tucker2(t, l.id, f), std::invalid_argument);
  const Tucker2Factors wrong = tucker2_decompose(Kernel4(DenseTensor({3, 3, 5, 4})), {2, 2});
  EXPECT_THROW(substitute_conv_tucker2(g, g.layers[0].id, wrong), std::invalid_argument);
}

TEST(SubstituteCpd3, RankOneAndPlanted) {
  ModelGraph g = single_conv({7, 7, 6}, 5, 3, 1, 1, 8);
  // Planted rank-4 kernel.
  CPFactors planted{testing::random_matrix(9, 4, 1), testing::random_matrix(5, 4, 2),
                    testing::random_matrix(6, 4, 3), {}};
  g.layers[0].kernel = unreshape_kernel(cpd3_reconstruct(planted)).tensor();
  const CPFactors f = cpd3_decompose(reshape_kernel(Kernel4(g.layers[0].kernel)), 4);
  ASSERT_LT(f.fit.rel_error, 1e-6);
  const ModelGraph t = substitute_conv_cpd3(g, g.layers[0].id, f);
  EXPECT_EQ(t.layers[1].kind, LayerKind::grouped_conv2d);
  EXPECT_EQ(t.layers[1].groups, 4u);
  const Activation x = random_activation(2, g.input, 9);
  EXPECT_LT(max_abs_diff(forward(g, x), forward(t, x)), 1e-4);
  EXPECT_EQ(count_params(t).weights, 4u * (6 + 9 + 5));

  const CPFactors one{testing::random_matrix(9, 1, 4), testing::random_matrix(5, 1, 5),
                      testing::random_matrix(6, 1, 6), {}};
  const ModelGraph r1 = substitute_conv_cpd3(g, g.layers[0].id, one);
  EXPECT_EQ(r1.layers[1].c_in, 1u);
  const Activation ref = naive_conv(x, unreshape_kernel(cpd3_reconstruct(one)).tensor(), 1, 1, 1,
                                    &*g.layers[0].bias);
  EXPECT_LT(max_abs_diff(forward(r1, x), ref.data), 1e-10);
}

TEST(SubstituteSvd, ProductEquivalence) {
  ModelGraph g;
  g.input = {1, 1, 128};
  g.add(make_fc("fc", 128, 10));
  testing::randomize(g, 10);
  const Activation x = random_activation(5, g.input, 11);

  const ModelGraph full = substitute_fc_svd(g, g.layers[0].id, svd_decompose(g.layers[0].weight, 10));
  EXPECT_LT(max_abs_diff(forward(g, x), forward(full, x)), 1e-10);

  const SVDFactors f = svd_decompose(g.layers[0].weight, 4);
  const ModelGraph t = substitute_fc_svd(g, g.layers[0].id, f);
  const RowMatrix ref = (x.data * f.product()).rowwise() + g.layers[0].bias->transpose();
  EXPECT_LT(max_abs_diff(forward(t, x), ref), 1e-10);
  EXPECT_EQ(count_params(t).weights, 4u * (128 + 10));
  EXPECT_EQ(count_params(t).biases, 10u);
}

TEST(UpdateGroupWeights, SameFactorsLeaveGraphUnchanged) {
  const ModelGraph g = single_conv({6, 6, 12}, 10, 3, 1, 1, 12);
  const ModelGraph t =
      substitute_conv_tucker2(g, g.layers[0].id, tucker2_decompose(Kernel4(g.layers[0].kernel), {8, 8}));
  const ModelGraph u = update_group_weights(t, t.groups[0].id, group_factors(t, t.groups[0]));
  ASSERT_EQ(u.layers.size(), t.layers.size());
  for (std::size_t i = 0; i < u.layers.size(); ++i) {
    EXPECT_EQ(u.layers[i].id, t.layers[i].id);
    EXPECT_EQ(u.layers[i].kernel, t.layers[i].kernel);
  }
  EXPECT_EQ(u.groups[0].ranks, t.groups[0].ranks);
}

TEST(UpdateGroupWeights, TuckerShrinksMembersInPlace) {
  const ModelGraph g = single_conv({6, 6, 12}, 10, 3, 1, 1, 13);
  const ModelGraph t =
      substitute_conv_tucker2(g, g.layers[0].id, tucker2_decompose(Kernel4(g.layers[0].kernel), {8, 8}));
  const auto f = std::get<Tucker2Factors>(group_factors(t, t.groups[0]));
  const ModelGraph u = update_group_weights(t, t.groups[0].id, tucker2_recompress(f, {5, 3}));
  EXPECT_EQ(u.layers.size(), 3u);
  EXPECT_EQ(u.layers[0].c_in, 12u);
  EXPECT_EQ(u.layers[0].c_out, 3u);
  EXPECT_EQ(u.layers[1].c_in, 3u);
  EXPECT_EQ(u.layers[1].c_out, 5u);
  EXPECT_EQ(u.layers[2].c_in, 5u);
  EXPECT_EQ(u.layers[2].c_out, 10u);
  EXPECT_EQ(u.groups[0].ranks, (std::vector<std::size_t>{5, 3}));
  EXPECT_NO_THROW(infer_shapes(u));
  EXPECT_THROW(update_group_weights(u, u.groups[0].id, f), std::invalid_argument);
}

TEST(UpdateGroupWeights, SvdShrinksInnerDimension) {
  ModelGraph g;
  g.input = {1, 1, 40};
  g.add(make_fc("fc", 40, 30));
  testing::randomize(g, 14);
  const ModelGraph t = substitute_fc_svd(g, g.layers[0].id, svd_decompose(g.layers[0].weight, 20));
  const auto f = std::get<SVDFactors>(group_factors(t, t.groups[0]));
  const ModelGraph u = update_group_weights(t, t.groups[0].id, svd_recompress(f, 7));
  EXPECT_EQ(u.layers[0].l_out, 7u);
  EXPECT_EQ(u.layers[1].l_in, 7u);
  EXPECT_TRUE(u.layers[1].bias);
}

TEST(GroupFactors, RoundTripThroughMembers) {
  const ModelGraph g = single_conv({6, 6, 7}, 9, 3, 1, 1, 15);
  const CPFactors f = cpd3_decompose(reshape_kernel(Kernel4(g.layers[0].kernel)), 5);
  const ModelGraph t = substitute_conv_cpd3(g, g.layers[0].id, f);
  const auto back = std::get<CPFactors>(group_factors(t, t.groups[0]));
  EXPECT_EQ(back.factor_spatial, f.factor_spatial);
  EXPECT_EQ(back.factor_out, f.factor_out);
  EXPECT_EQ(back.factor_in, f.factor_in);
}

TEST(ConstantRate, CompressedLayerMeetsAlpha) {
  for (std::size_t c : {32u, 64u}) {
    for (double alpha : {1.5, 2.0, 3.16}) {
      const ModelGraph g = single_conv({4, 4, c}, 2 * c, 3, 1, 1, c);
      const RateRank r = tucker2_rate_rank(c, 2 * c, 3, alpha, 1.0);
      ASSERT_TRUE(r.feasible);
      const ModelGraph t = substitute_conv_tucker2(
          g, g.layers[0].id, tucker2_decompose(Kernel4(g.layers[0].kernel), r.tucker));
      EXPECT_GE(static_cast<double>(count_params(g).weights) / static_cast<double>(count_params(t).weights),
                alpha);
    }
  }
}

}  // namespace
}  // namespace musco

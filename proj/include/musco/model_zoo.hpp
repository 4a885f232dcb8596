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
#include <cstdint>
#include <random>
#include <string>

#include "musco/model_graph.hpp"

namespace musco {

/// 13 conv layers of VGG-16 (3x3, same padding) with 2x2 pools after
/// conv 2, 4, 7 and 10; no classifier. Weights are zero.
inline ModelGraph vgg16_conv_stack(std::size_t image = 224) {
  ModelGraph g;
  g.input = {image, image, 3};
  const std::size_t widths[] = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
  std::size_t c = 3;
  for (std::size_t i = 0; i < 13; ++i) {
    g.add(make_conv("conv" + std::to_string(i + 1), c, widths[i], 3, 1, 1));
    g.add(make_simple("relu" + std::to_string(i + 1), LayerKind::relu));
    c = widths[i];
    if (i == 1 || i == 3 || i == 6 || i == 9) g.add(make_maxpool("pool" + std::to_string(i + 1)));
  }
  return g;
}

/// ResNet-50 stem convolution: 7x7 stride 2 padding 3, 3 -> 64.
inline ModelGraph resnet_stem(std::size_t image = 224) {
  ModelGraph g;
  g.input = {image, image, 3};
  g.add(make_conv("conv1", 3, 64, 7, 2, 3));
  g.add(make_simple("relu1", LayerKind::relu));
  return g;
}

/// conv3x3(1 -> c1) relu pool, conv3x3(c1 -> c2) relu pool, flatten, fc -> classes.
inline ModelGraph toy_cnn(std::size_t image = 28, std::size_t c1 = 32, std::size_t c2 = 128,
                          std::size_t classes = 10, std::size_t channels = 1) {
  ModelGraph g;
  g.input = {image, image, channels};
  g.add(make_conv("conv1", channels, c1, 3, 1, 1));
  g.add(make_simple("relu1", LayerKind::relu));
  g.add(make_maxpool("pool1"));
  g.add(make_conv("conv2", c1, c2, 3, 1, 1));
  g.add(make_simple("relu2", LayerKind::relu));
  g.add(make_maxpool("pool2"));
  g.add(make_simple("flatten", LayerKind::flatten));
  const ActShape s = infer_shapes(g).back();
  g.add(make_fc("fc", s.size(), classes));
  g.add(make_simple("head", LayerKind::softmax_xent_head));
  return g;
}

/// He-normal weights, zero biases.
inline void init_weights(ModelGraph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (LayerSpec& l : g.layers) {
    if (!l.has_weights()) continue;
    const double fan_in = l.is_conv() ? static_cast<double>(l.d * l.d * (l.c_in / l.groups))
                                      : static_cast<double>(l.l_in);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    if (l.is_conv()) {
      for (double& v : l.kernel.mutable_data()) v = normal(rng);
    } else {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) l.weight(i, j) = normal(rng);
    }
    if (l.bias) l.bias->setZero();
  }
}

}  // namespace musco

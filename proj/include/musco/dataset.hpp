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

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "musco/model_graph.hpp"

namespace musco {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Batch of activations. Row (n * h + y) * w + x holds the c channels of
/// sample n at (y, x); flat activations have one row per sample.
struct Activation {
  std::size_t n = 0;
  ActShape shape;
  RowMatrix data;

  Activation() = default;
  Activation(std::size_t batch, ActShape s)
      : n(batch), shape(s),
        data(RowMatrix::Zero(static_cast<Eigen::Index>(batch * s.h * s.w),
                             static_cast<Eigen::Index>(s.c))) {}
};

struct Batch {
  Activation inputs;
  std::vector<int> targets;
};

/// Images stored as h x w x c values in [0, 1], row-major per sample, with
/// integer class labels.
struct Dataset {
  ActShape shape;
  std::size_t classes = 0;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (pixels.size() != labels.size() * shape.size())
      throw std::invalid_argument("Dataset: " + std::to_string(pixels.size()) +
                                  " pixel values for " + std::to_string(labels.size()) +
                                  " samples of " + act_string(shape));
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= classes)
        throw std::invalid_argument("Dataset: label " + std::to_string(y) +
                                    " outside class count " + std::to_string(classes));
  }

  Batch batch(const std::vector<std::size_t>& indices) const {
    Batch b{Activation(indices.size(), shape), {}};
    const std::size_t per = shape.size();
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const double* src = pixels.data() + indices[k] * per;
      // hwc order per sample is exactly the activation row layout
      std::copy(src, src + per, b.inputs.data.data() + k * per);
      b.targets.push_back(labels[indices[k]]);
    }
    return b;
  }

  Batch range(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    return batch(idx);
  }
};

}  // namespace musco

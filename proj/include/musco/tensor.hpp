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
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace musco {

using Matrix2 = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense real tensor with 1 to 4 modes. Element (i0, i1, ..., iN) lives at
/// i0 + d0 * (i1 + d1 * (i2 + ...)): the lowest-numbered index varies fastest.
class DenseTensor {
 public:
  static constexpr std::size_t kMaxModes = 4;

  DenseTensor() = default;

  explicit DenseTensor(Shape shape)
      : DenseTensor(shape, std::vector<double>(checked_size(shape), 0.0)) {}

  DenseTensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_size(shape_)) {
      throw std::invalid_argument("DenseTensor: data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " +
                                  shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t modes() const { return shape_.size(); }
  std::size_t extent(std::size_t mode) const { return shape_.at(mode); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  // Used by the trainer to update weights in place.
  std::span<double> mutable_data() { return data_; }

  template <typename... I>
  double operator()(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... I>
  double& operator()(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  double squared_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }
  double frobenius_norm() const { return std::sqrt(squared_norm()); }

  /// Same elements, new extents. Element count must match.
  DenseTensor reshaped(Shape shape) const {
    return DenseTensor(std::move(shape), data_);
  }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  static std::size_t checked_size(const Shape& shape) {
    if (shape.empty() || shape.size() > kMaxModes) {
      throw std::invalid_argument("DenseTensor: unsupported mode count " +
                                  std::to_string(shape.size()));
    }
    for (std::size_t e : shape) {
      if (e == 0) {
        throw std::invalid_argument("DenseTensor: zero extent in shape " +
                                    shape_string(shape));
      }
    }
    return shape_product(shape);
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0, stride = 1, m = 0;
    for (std::size_t i : idx) {
      off += i * stride;
      stride *= shape_[m++];
    }
    return off;
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Convolution kernel, modes (h, w, out, in), square spatial filter.
class Kernel4 {
 public:
  Kernel4() = default;
  explicit Kernel4(DenseTensor t) : t_(std::move(t)) {
    if (t_.modes() != 4 || t_.extent(0) != t_.extent(1)) {
      throw std::invalid_argument("Kernel4: expected d x d x C_out x C_in, got " +
                                  shape_string(t_.shape()));
    }
  }
  Kernel4(std::size_t d, std::size_t c_out, std::size_t c_in)
      : Kernel4(DenseTensor({d, d, c_out, c_in})) {}

  std::size_t d() const { return t_.extent(0); }
  std::size_t c_out() const { return t_.extent(2); }
  std::size_t c_in() const { return t_.extent(3); }
  const DenseTensor& tensor() const { return t_; }
  DenseTensor& tensor() { return t_; }

 private:
  DenseTensor t_;
};

/// Reshaped kernel d^2 x C_out x C_in.
class Kernel3 {
 public:
  Kernel3() = default;
  explicit Kernel3(DenseTensor t) : t_(std::move(t)) {
    if (t_.modes() != 3) {
      throw std::invalid_argument("Kernel3: expected 3 modes, got " +
                                  shape_string(t_.shape()));
    }
    const auto d = static_cast<std::size_t>(
        std::lround(std::sqrt(static_cast<double>(t_.extent(0)))));
    if (d * d != t_.extent(0)) {
      throw std::invalid_argument("Kernel3: first extent is not a perfect square");
    }
  }

  std::size_t d() const {
    return static_cast<std::size_t>(
        std::lround(std::sqrt(static_cast<double>(t_.extent(0)))));
  }
  std::size_t c_out() const { return t_.extent(1); }
  std::size_t c_in() const { return t_.extent(2); }
  const DenseTensor& tensor() const { return t_; }

 private:
  DenseTensor t_;
};

namespace detail {

struct ModeSplit {
  std::size_t left = 1;   // product of extents before the mode
  std::size_t extent = 1;
  std::size_t right = 1;  // product of extents after the mode
};

inline ModeSplit split_at(const Shape& shape, std::size_t mode) {
  ModeSplit s;
  for (std::size_t i = 0; i < mode; ++i) s.left *= shape[i];
  s.extent = shape[mode];
  for (std::size_t i = mode + 1; i < shape.size(); ++i) s.right *= shape[i];
  return s;
}

}  // namespace detail

/// Mode-n unfolding: extent(mode) rows; columns enumerate the remaining
/// indices with lower-numbered modes varying fastest.
inline Matrix2 unfold(const DenseTensor& t, std::size_t mode) {
  if (mode >= t.modes()) {
    throw std::out_of_range("unfold: mode " + std::to_string(mode) +
                            " out of range for shape " + shape_string(t.shape()));
  }
  const auto s = detail::split_at(t.shape(), mode);
  Matrix2 m(s.extent, s.left * s.right);
  const auto d = t.data();
  for (std::size_t r = 0; r < s.right; ++r) {
    for (std::size_t i = 0; i < s.extent; ++i) {
      const double* src = d.data() + s.left * (i + s.extent * r);
      for (std::size_t l = 0; l < s.left; ++l) {
        m(i, l + s.left * r) = src[l];
      }
    }
  }
  return m;
}

inline DenseTensor fold(const Matrix2& m, std::size_t mode, const Shape& shape) {
  if (mode >= shape.size()) {
    throw std::out_of_range("fold: mode out of range");
  }
  const auto s = detail::split_at(shape, mode);
  if (static_cast<std::size_t>(m.rows()) != s.extent ||
      static_cast<std::size_t>(m.cols()) != s.left * s.right) {
    throw std::invalid_argument("fold: matrix " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) +
                                " inconsistent with shape " + shape_string(shape) +
                                " at mode " + std::to_string(mode));
  }
  std::vector<double> data(shape_product(shape));
  for (std::size_t r = 0; r < s.right; ++r) {
    for (std::size_t i = 0; i < s.extent; ++i) {
      double* dst = data.data() + s.left * (i + s.extent * r);
      for (std::size_t l = 0; l < s.left; ++l) dst[l] = m(i, l + s.left * r);
    }
  }
  return DenseTensor(shape, std::move(data));
}

/// t x_mode m: contracts mode `mode` of t with the columns of m.
inline DenseTensor mode_product(const DenseTensor& t, const Matrix2& m,
                                std::size_t mode) {
  if (mode >= t.modes()) {
    throw std::out_of_range("mode_product: mode out of range");
  }
  if (static_cast<std::size_t>(m.cols()) != t.extent(mode)) {
    throw std::invalid_argument("mode_product: matrix has " +
                                std::to_string(m.cols()) + " columns, mode " +
                                std::to_string(mode) + " has extent " +
                                std::to_string(t.extent(mode)));
  }
  const auto s = detail::split_at(t.shape(), mode);
  Shape out_shape = t.shape();
  out_shape[mode] = static_cast<std::size_t>(m.rows());
  std::vector<double> out(shape_product(out_shape));
  const auto in = t.data();
  const auto n_new = static_cast<Eigen::Index>(m.rows());
  using Map = Eigen::Map<const Matrix2>;
  using MutMap = Eigen::Map<Matrix2>;
  for (std::size_t r = 0; r < s.right; ++r) {
    // Slice r is a (left x extent) column-major block.
    Map x(in.data() + s.left * s.extent * r, static_cast<Eigen::Index>(s.left),
          static_cast<Eigen::Index>(s.extent));
    MutMap y(out.data() + s.left * n_new * r, static_cast<Eigen::Index>(s.left),
             n_new);
    y.noalias() = x * m.transpose();
  }
  return DenseTensor(std::move(out_shape), std::move(out));
}

/// Merges the two spatial modes: d x d x C_out x C_in -> d^2 x C_out x C_in.
inline Kernel3 reshape_kernel(const Kernel4& k) {
  return Kernel3(k.tensor().reshaped({k.d() * k.d(), k.c_out(), k.c_in()}));
}

inline Kernel4 unreshape_kernel(const Kernel3& k) {
  return Kernel4(k.tensor().reshaped({k.d(), k.d(), k.c_out(), k.c_in()}));
}

/// ||a - b||_F / ||a||_F. When ||a||_F == 0 the result is ||b||_F.
inline double rel_error(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("rel_error: shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  double diff = 0.0;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = x[i] - y[i];
    diff += e * e;
  }
  const double na = a.frobenius_norm();
  if (na == 0.0) return b.frobenius_norm();
  return std::sqrt(diff) / na;
}

inline double rel_error(const Matrix2& a, const Matrix2& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("rel_error: matrix shape mismatch");
  }
  const double na = a.norm();
  if (na == 0.0) return b.norm();
  return (a - b).norm() / na;
}

}  // namespace musco

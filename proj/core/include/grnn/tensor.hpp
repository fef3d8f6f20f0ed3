#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "grnn/rng.hpp"

namespace grnn {

using Shape = std::vector<std::size_t>;

/// Dense row-major tensor of doubles.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape, double fill = 0.0);
  DenseTensor(Shape shape, std::vector<double> data);

  static DenseTensor zeros(Shape shape) { return DenseTensor(std::move(shape)); }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::span<double> values() { return data_; }
  [[nodiscard]] std::span<const double> values() const { return data_; }
  [[nodiscard]] double* data() { return data_.data(); }
  [[nodiscard]] const double* data() const { return data_.data(); }

  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(double v);
  /// True when every entry is finite.
  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Elementwise max(0, c).
DenseTensor relu(const DenseTensor& t);

/// Row-wise softmax of a rank-2 tensor with per-row max subtraction.
DenseTensor softmax_rows(const DenseTensor& m);

/// Inverted-dropout mask: each entry is 0 with probability 1 - keep_prob and
/// 1 / keep_prob otherwise. One draw per entry in row-major order.
DenseTensor dropout_mask(const Shape& shape, double keep_prob, Rng& rng);

/// Applies inverted dropout in place, drawing only for nonzero entries.
/// Returns the mask (zero where the input was zero).
DenseTensor dropout_nonzero(DenseTensor& t, double keep_prob, Rng& rng);

/// Row-major matrix product of rank-2 tensors, skipping zero entries of `a`.
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);

/// Frobenius norm.
double frobenius(const DenseTensor& t);

/// Mean of squared entries.
double mean_square(const DenseTensor& t);

}  // namespace grnn

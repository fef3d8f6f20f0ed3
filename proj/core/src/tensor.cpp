#include "grnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "grnn/errors.hpp"

namespace grnn {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k) s += "x";
    s += std::to_string(shape[k]);
  }
  return s + "]";
}

DenseTensor::DenseTensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

void DenseTensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool DenseTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseTensor relu(const DenseTensor& t) {
  DenseTensor out = t;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

DenseTensor softmax_rows(const DenseTensor& m) {
  if (m.rank() != 2) throw ShapeError("softmax_rows expects a rank-2 tensor");
  const std::size_t rows = m.dim(0);
  const std::size_t cols = m.dim(1);
  DenseTensor out(m.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = m.data() + r * cols;
    double* o = out.data() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return out;
}

namespace {
void check_keep(double keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ParameterError("keep_prob must lie in (0, 1], got " + std::to_string(keep_prob));
  }
}
}  // namespace

DenseTensor dropout_mask(const Shape& shape, double keep_prob, Rng& rng) {
  check_keep(keep_prob);
  DenseTensor mask(shape, 1.0);
  if (keep_prob == 1.0) return mask;
  const double scale = 1.0 / keep_prob;
  for (double& v : mask.values()) v = rng.uniform() < keep_prob ? scale : 0.0;
  return mask;
}

DenseTensor dropout_nonzero(DenseTensor& t, double keep_prob, Rng& rng) {
  check_keep(keep_prob);
  DenseTensor mask(t.shape());
  const double scale = 1.0 / keep_prob;
  auto vals = t.values();
  auto m = mask.values();
  for (std::size_t k = 0; k < vals.size(); ++k) {
    if (vals[k] == 0.0) continue;
    if (keep_prob == 1.0 || rng.uniform() < keep_prob) {
      m[k] = scale;
      vals[k] *= scale;
    } else {
      vals[k] = 0.0;
    }
  }
  return mask;
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch " + shape_string(a.shape()) + " * " +
                     shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), inner = a.dim(1), m = b.dim(1);
  DenseTensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

double frobenius(const DenseTensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

double mean_square(const DenseTensor& t) {
  if (t.empty()) return 0.0;
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return s / static_cast<double>(t.size());
}

}  // namespace grnn

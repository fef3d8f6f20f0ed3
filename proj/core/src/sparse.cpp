#include "grnn/sparse.hpp"

#include <algorithm>

#include "grnn/errors.hpp"

namespace grnn {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> entries) {
  for (const auto& t : entries) {
    if (t.row >= rows || t.col >= cols) {
      throw ParameterError("sparse entry (" + std::to_string(t.row) + ", " +
                           std::to_string(t.col) + ") outside " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m(rows, cols);
  m.col_idx_.reserve(entries.size());
  m.values_.reserve(entries.size());
  std::vector<std::size_t> counts(rows, 0);
  for (std::size_t k = 0; k < entries.size();) {
    const std::size_t r = entries[k].row, c = entries[k].col;
    double w = 0.0;
    for (; k < entries.size() && entries[k].row == r && entries[k].col == c; ++k) {
      w += entries[k].weight;
    }
    if (w == 0.0) continue;
    m.col_idx_.push_back(c);
    m.values_.push_back(w);
    ++counts[r];
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] = m.row_ptr_[r] + counts[r];
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<Triplet> t;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

SparseMatrix SparseMatrix::from_dense(const DenseTensor& d) {
  if (d.rank() != 2) throw ShapeError("from_dense expects a rank-2 tensor");
  SparseMatrix m(d.dim(0), d.dim(1));
  for (std::size_t r = 0; r < d.dim(0); ++r) {
    for (std::size_t c = 0; c < d.dim(1); ++c) {
      const double v = d(r, c);
      if (v == 0.0) continue;
      m.col_idx_.push_back(c);
      m.values_.push_back(v);
    }
    m.row_ptr_[r + 1] = m.col_idx_.size();
  }
  return m;
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto cols = row_cols(r);
  const auto it = std::lower_bound(cols.begin(), cols.end(), c);
  if (it == cols.end() || *it != c) return 0.0;
  return values_[row_ptr_[r] + static_cast<std::size_t>(it - cols.begin())];
}

SparseMatrix SparseMatrix::transpose() const {
  SparseMatrix t(cols_, rows_);
  std::vector<std::size_t> counts(cols_ + 1, 0);
  for (std::size_t c : col_idx_) ++counts[c + 1];
  for (std::size_t c = 0; c < cols_; ++c) counts[c + 1] += counts[c];
  t.row_ptr_ = counts;
  t.col_idx_.resize(nnz());
  t.values_.resize(nnz());
  // Rows are visited in ascending order, so columns of the transpose ascend.
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const std::size_t dst = counts[col_idx_[k]]++;
      t.col_idx_[dst] = r;
      t.values_[dst] = values_[k];
    }
  }
  return t;
}

DenseTensor SparseMatrix::to_dense() const {
  DenseTensor d({rows_, cols_});
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d(r, col_idx_[k]) = values_[k];
  }
  return d;
}

std::vector<Triplet> SparseMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      out.push_back({r, col_idx_[k], values_[k]});
    }
  }
  return out;
}

std::vector<double> SparseMatrix::row_sums() const {
  std::vector<double> s(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s[r] += values_[k];
  }
  return s;
}

void spmm_strided(const SparseMatrix& s, const double* in, std::size_t in_stride, double* out,
                  std::size_t out_stride, std::size_t width, FlopCounter* flops) {
  const auto row_ptr = s.row_ptr();
  const auto col_idx = s.col_idx();
  const auto vals = s.values();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double* o = out + r * out_stride;
    std::fill(o, o + width, 0.0);
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const double w = vals[k];
      const double* src = in + col_idx[k] * in_stride;
      for (std::size_t j = 0; j < width; ++j) o[j] += w * src[j];
    }
  }
  if (flops) flops->multiply_adds += static_cast<std::uint64_t>(s.nnz()) * width;
}

DenseTensor spmm(const SparseMatrix& s, const DenseTensor& d, FlopCounter* flops) {
  if (d.rank() != 2 || s.cols() != d.dim(0)) {
    throw ShapeError("spmm shape mismatch: sparse " + std::to_string(s.rows()) + "x" +
                     std::to_string(s.cols()) + " times dense " + shape_string(d.shape()));
  }
  const std::size_t width = d.dim(1);
  DenseTensor out({s.rows(), width});
  spmm_strided(s, d.data(), width, out.data(), width, width, flops);
  return out;
}

}  // namespace grnn

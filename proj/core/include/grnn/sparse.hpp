#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "grnn/tensor.hpp"

namespace grnn {

struct Triplet {
  std::size_t row;
  std::size_t col;
  double weight;
};

/// Counts multiply-add operations performed by the sparse kernels.
struct FlopCounter {
  std::uint64_t multiply_adds = 0;
};

/// Compressed-row sparse matrix. Columns ascend within each row and every
/// (row, col) pair appears at most once; stored values are never exactly 0.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols);

  /// Builds from unordered triplets. Duplicate coordinates are summed and
  /// entries that end up exactly zero are dropped.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> entries);
  static SparseMatrix identity(std::size_t n);
  static SparseMatrix from_dense(const DenseTensor& m);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t nnz() const { return col_idx_.size(); }

  [[nodiscard]] std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  [[nodiscard]] std::span<const std::size_t> col_idx() const { return col_idx_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }

  /// Column indices of row r.
  [[nodiscard]] std::span<const std::size_t> row_cols(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  [[nodiscard]] std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  /// Value at (r, c), zero when absent.
  [[nodiscard]] double at(std::size_t r, std::size_t c) const;

  [[nodiscard]] SparseMatrix transpose() const;
  [[nodiscard]] DenseTensor to_dense() const;
  [[nodiscard]] std::vector<Triplet> triplets() const;
  [[nodiscard]] std::vector<double> row_sums() const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// out = s * d for a rank-2 dense operand.
DenseTensor spmm(const SparseMatrix& s, const DenseTensor& d, FlopCounter* flops = nullptr);

/// Strided kernel behind spmm: `width` columns are read from rows of `in`
/// spaced `in_stride` apart and written (overwriting) into `out`.
void spmm_strided(const SparseMatrix& s, const double* in, std::size_t in_stride, double* out,
                  std::size_t out_stride, std::size_t width, FlopCounter* flops = nullptr);

}  // namespace grnn

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "grnn/graph.hpp"
#include "grnn/layers.hpp"
#include "grnn/tensor.hpp"

namespace grnn {

/// Disjoint train/validation/test node lists.
struct LabeledSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  /// Throws FormatError on overlap, out-of-range ids or an empty train set.
  void validate(std::size_t num_nodes) const;

  friend bool operator==(const LabeledSplit&, const LabeledSplit&) = default;
};

struct RegWeights {
  double mu1 = 0.0;     // graph smoothness
  double mu2 = 0.0;     // L2 over all parameters
  double lambda = 0.0;  // L1 over hidden-layer relation mixing
};

enum class SmoothnessMode { laplacian, raw_s };

/// Weighted contributions of each objective term.
struct LossBreakdown {
  double ce = 0.0;
  double smooth = 0.0;
  double l2 = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

inline constexpr double kLogClamp = 1e-15;

/// -sum_{n in ids} sum_k Y[n,k] ln(max(Ŷ[n,k], 1e-15)). Duplicate ids count twice.
double cross_entropy_masked(const DenseTensor& y_hat, const DenseTensor& y,
                            std::span<const std::size_t> ids);

/// The matrices M_i entering sum_i Tr(Ŷᵀ M_i Ŷ).
std::vector<SparseMatrix> smoothness_matrices(const MultiRelationalGraph& g, SmoothnessMode mode);

double smoothness_reg(const DenseTensor& y_hat, std::span<const SparseMatrix> matrices);
double smoothness_reg(const DenseTensor& y_hat, const MultiRelationalGraph& g, SmoothnessMode mode);

/// Sum of squares over every parameter tensor.
double l2_reg(const ModelParams& params);

/// Sum of |r_mix| over the hidden layers (not the input feeds).
double l1_relations(const ModelParams& params);

LossBreakdown total_loss(const DenseTensor& y_hat, const DenseTensor& y,
                         std::span<const std::size_t> ids, std::span<const SparseMatrix> smoothness,
                         const ModelParams& params, const RegWeights& rw);
LossBreakdown total_loss(const DenseTensor& y_hat, const DenseTensor& y,
                         std::span<const std::size_t> ids, const MultiRelationalGraph& g,
                         const ModelParams& params, const RegWeights& rw,
                         SmoothnessMode mode = SmoothnessMode::laplacian);

/// One JSON object on a single line with keys ce, smooth, l2, l1, total (and
/// epoch when non-negative).
std::string loss_json_line(const LossBreakdown& b, long epoch = -1);

}  // namespace grnn

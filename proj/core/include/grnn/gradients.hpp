#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grnn/layers.hpp"
#include "grnn/objective.hpp"

namespace grnn {

/// The training objective bound to one dataset and graph.
///
/// Holds references to the labels and graph (they must outlive it) and
/// precomputes everything that does not depend on the parameters: the
/// replicated and diffused features and the smoothness matrices.
class Objective {
 public:
  Objective(const DenseTensor& x, const DenseTensor& y, std::vector<std::size_t> ids,
            const MultiRelationalGraph& g, const ModelParams& layout, RegWeights rw,
            ModelOptions options = {}, SmoothnessMode smoothness = SmoothnessMode::laplacian);

  struct Evaluation {
    LossBreakdown loss;
    ForwardPass pass;
  };

  [[nodiscard]] Evaluation evaluate(const ModelParams& params,
                                    const DropoutPlan* dropout = nullptr) const;

  /// Loss and exact reverse-mode gradients. ReLU'(0) = 0 and sign(0) = 0.
  [[nodiscard]] std::pair<LossBreakdown, Gradients> backward(
      const ModelParams& params, const DropoutPlan* dropout = nullptr) const;

  [[nodiscard]] const RegWeights& weights() const { return rw_; }
  [[nodiscard]] const ModelOptions& options() const { return options_; }
  [[nodiscard]] const MultiRelationalGraph& graph() const { return *g_; }
  [[nodiscard]] const InputCache& inputs() const { return inputs_; }
  [[nodiscard]] std::span<const SparseMatrix> smoothness() const { return smooth_; }

 private:
  const DenseTensor* y_;
  std::vector<std::size_t> ids_;
  const MultiRelationalGraph* g_;
  RegWeights rw_;
  ModelOptions options_;
  InputCache inputs_;
  std::vector<SparseMatrix> smooth_;
  std::vector<SparseMatrix> smooth_t_;
  bool smooth_symmetric_;
};

/// Convenience wrapper building a one-shot Objective.
std::pair<LossBreakdown, Gradients> backward(const DenseTensor& x, const DenseTensor& y,
                                             std::span<const std::size_t> ids,
                                             const MultiRelationalGraph& g,
                                             const ModelParams& params, const RegWeights& rw,
                                             const ModelOptions& options = {},
                                             SmoothnessMode smoothness = SmoothnessMode::laplacian,
                                             const DropoutPlan* dropout = nullptr);

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
};

struct GradcheckReport {
  double eps = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  std::vector<TensorCheck> tensors;

  [[nodiscard]] std::string to_json() const;
};

/// Central finite differences on `sample` randomly chosen coordinates
/// (all coordinates when `sample` is at least the parameter count).
/// Error per coordinate is |fd - g| / max(1, |fd|, |g|). A coordinate is
/// excluded when the +-eps probes change any ReLU activation pattern, or when
/// it is a penalized relation-mixing entry within eps of zero.
GradcheckReport finite_diff_check(const Objective& objective, const ModelParams& params,
                                  double eps, std::size_t sample, Rng& rng);

}  // namespace grnn

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grnn/data_io.hpp"
#include "grnn/gradients.hpp"
#include "grnn/graph.hpp"
#include "grnn/layers.hpp"
#include "grnn/objective.hpp"

namespace grnn {

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update. An empty state is initialized to zeros.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainConfig {
  double lr = 0.005;
  std::size_t max_epochs = 300;
  std::size_t patience = 60;
  RegWeights rw;
  double keep_prob = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{64};
  Normalization normalization = Normalization::sym_selfloop;
  SmoothnessMode smoothness = SmoothnessMode::laplacian;
  WeightSharing sharing = WeightSharing::shared;
  MixingIndex mixing = MixingIndex::cross;
  SkipFeed skip = SkipFeed::diffused;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  [[nodiscard]] ModelOptions model_options() const { return {sharing, mixing, skip}; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown train;  // on the parameters before this epoch's step
  double val_loss = 0.0;
  double val_acc = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double test_acc = 0.0;

  /// `epoch,ce,smooth,l2,l1,total,val_loss,val_acc`; wall times are left out
  /// so reruns compare byte for byte.
  [[nodiscard]] std::string to_csv() const;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

/// Applies the configured normalization to every relation.
MultiRelationalGraph prepare_graph(const MultiRelationalGraph& g, Normalization mode);

/// Full-batch training from freshly initialized parameters. `g` is the raw
/// graph; normalization is applied here. Returns the parameters that reached
/// the lowest validation loss. Throws DivergenceError on a non-finite loss.
TrainResult train(const Dataset& data, const MultiRelationalGraph& g, const TrainConfig& cfg);

/// Fraction of `ids` whose argmax prediction matches the label. Ties go to
/// the smallest class index.
double accuracy(const DenseTensor& y_hat, const DenseTensor& y, std::span<const std::size_t> ids);

/// Accuracy of `params` over an already prepared graph.
double evaluate(const ModelParams& params, const Dataset& data, const MultiRelationalGraph& g,
                std::span<const std::size_t> ids, const ModelOptions& options = {});

}  // namespace grnn

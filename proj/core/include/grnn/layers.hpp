#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "grnn/graph.hpp"
#include "grnn/rng.hpp"
#include "grnn/sparse.hpp"
#include "grnn/tensor.hpp"

namespace grnn {

/// Feature-mixing weights either shared by all nodes (P_in x I x P_out) or
/// indexed per node (P_in x N x I x P_out).
enum class WeightSharing { shared, per_node };

/// Which relation's diffused signal enters the inner product of the mixing
/// step: `cross` pairs R[i, j, p] with h[n, j] so R combines relations;
/// `printed` pairs it with h[n, i].
enum class MixingIndex { cross, printed };

/// Whether the per-layer feature feed is diffused through the graph first.
enum class SkipFeed { diffused, direct };

struct ModelOptions {
  WeightSharing sharing = WeightSharing::shared;
  MixingIndex mixing = MixingIndex::cross;
  SkipFeed skip = SkipFeed::diffused;
};

/// One linear block: feature mixing `w_mix` and relation mixing `r_mix`
/// (I x I x P_out).
struct LayerParams {
  DenseTensor w_mix;
  DenseTensor r_mix;

  [[nodiscard]] bool per_node() const { return w_mix.rank() == 4; }
  [[nodiscard]] std::size_t in_width() const { return w_mix.dim(0); }
  [[nodiscard]] std::size_t out_width() const { return w_mix.dim(w_mix.rank() - 1); }
  [[nodiscard]] std::size_t relations() const { return r_mix.dim(0); }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Output head: per-relation combination weights and a class bias.
struct OutputParams {
  DenseTensor relation_weights;  // I
  DenseTensor bias;              // K

  friend bool operator==(const OutputParams&, const OutputParams&) = default;
};

struct ModelParams {
  std::vector<LayerParams> layers;       // one per hidden layer, over H(l-1)
  std::vector<LayerParams> input_feeds;  // one per hidden layer, over the raw features
  OutputParams output;

  [[nodiscard]] std::size_t num_layers() const { return layers.size(); }
  [[nodiscard]] std::size_t num_relations() const { return output.relation_weights.size(); }
  [[nodiscard]] std::size_t num_classes() const { return output.bias.size(); }
  [[nodiscard]] std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Gradient tensors mirror parameter shapes one-for-one.
using Gradients = ModelParams;

/// Visits every parameter tensor in a fixed order with a stable name such as
/// `layers.0.w_mix` or `output.bias`.
void for_each_tensor(ModelParams& p, const std::function<void(std::string_view, DenseTensor&)>& fn);
void for_each_tensor(const ModelParams& p,
                     const std::function<void(std::string_view, const DenseTensor&)>& fn);

ModelParams zeros_like(const ModelParams& p);

struct ModelShape {
  std::size_t num_nodes = 0;
  std::size_t features = 0;
  std::vector<std::size_t> hidden;  // widths of layers 1..L-1; the last layer emits `classes`
  std::size_t classes = 2;
  std::size_t relations = 1;
  WeightSharing sharing = WeightSharing::shared;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) feature weights, identity relation
/// mixing, relation weights 1/I and zero bias.
ModelParams init_params(const ModelShape& shape, Rng& rng);

/// Ĥ(0): the feature matrix replicated across relations (N x I x F).
DenseTensor init_input(const DenseTensor& x, std::size_t relations);

/// out[:, i, :] = S_i * h_prev[:, i, :].
DenseTensor aggregate(const DenseTensor& h_prev, const MultiRelationalGraph& g,
                      FlopCounter* flops = nullptr);

/// Z[n, i, p] = sum_j R[i, j, p] <h[n, src, :], w[:, (n,) j, p]> with src = j
/// (cross) or i (printed). Handles both weight-sharing layouts.
DenseTensor mix(const DenseTensor& aggregated, const LayerParams& lp,
                MixingIndex mixing = MixingIndex::cross);

/// Reference composition of one recurrent layer's linear part.
DenseTensor recurrent_linear(const DenseTensor& h_prev, const DenseTensor& x_input,
                             const MultiRelationalGraph& g, const LayerParams& theta_z,
                             const LayerParams& theta_x, const ModelOptions& options = {});

/// Logits sum_i a_i h_last[:, i, :] + b.
DenseTensor output_logits(const DenseTensor& h_last, const OutputParams& out);
DenseTensor output_layer(const DenseTensor& h_last, const OutputParams& out);

/// Training-time dropout: each layer derives its masks from `stream`.
struct DropoutPlan {
  double keep_prob = 1.0;
  Rng stream;
};

/// Replicated features and, when cheap to reuse, their diffusion through the
/// graph. Build once per (features, graph) pair and reuse across epochs.
class InputCache {
 public:
  InputCache(const DenseTensor& x, const MultiRelationalGraph& g, bool with_aggregated);
  /// Decides `with_aggregated` from the layer widths.
  InputCache(const DenseTensor& x, const MultiRelationalGraph& g, const ModelParams& params,
             const ModelOptions& options);

  [[nodiscard]] const std::shared_ptr<const DenseTensor>& replicated() const { return replicated_; }
  [[nodiscard]] const std::shared_ptr<const DenseTensor>& aggregated() const { return aggregated_; }

 private:
  std::shared_ptr<const DenseTensor> replicated_;
  std::shared_ptr<const DenseTensor> aggregated_;
};

/// State of one linear feed inside a layer, retained for the backward pass.
struct FeedCache {
  std::shared_ptr<const DenseTensor> input;       // after dropout, N x I x P_in
  DenseTensor mask;                               // empty when no dropout was applied
  std::shared_ptr<const DenseTensor> aggregated;  // S * input when aggregated first
  DenseTensor transformed;                        // fast path: per-relation T, N x I x P_out
  MixingIndex mixing = MixingIndex::cross;
  bool diffused = true;
  bool aggregate_first = true;
  bool fast = true;
};

struct LayerActivations {
  FeedCache hidden;  // over H(l-1)
  FeedCache skip;    // over the raw features
  DenseTensor z;     // pre-activation, N x I x P_out
  DenseTensor h;     // relu(z)
};

struct ForwardPass {
  DenseTensor logits;  // N x K
  DenseTensor y_hat;   // N x K, rows are probability vectors
  std::vector<LayerActivations> layers;
};

ForwardPass forward(const DenseTensor& x, const MultiRelationalGraph& g, const ModelParams& params,
                    const ModelOptions& options = {}, const DropoutPlan* dropout = nullptr,
                    FlopCounter* flops = nullptr);

ForwardPass forward(const InputCache& inputs, const MultiRelationalGraph& g,
                    const ModelParams& params, const ModelOptions& options = {},
                    const DropoutPlan* dropout = nullptr, FlopCounter* flops = nullptr);

/// Throws ShapeError unless params chain from `features` to the class count
/// over `g`.
void validate_params(const ModelParams& params, const MultiRelationalGraph& g,
                     std::size_t features);

}  // namespace grnn

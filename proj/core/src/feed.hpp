#pragma once

// Kernels for one linear feed (aggregation + feature mixing + relation
// mixing), shared by the forward and backward passes.

#include <memory>

#include "grnn/layers.hpp"

namespace grnn::detail {

/// Adds the feed's contribution to `z` (N x I x P_out) and returns the cache.
FeedCache run_feed(std::shared_ptr<const DenseTensor> input,
                   std::shared_ptr<const DenseTensor> precomputed_aggregated, DenseTensor mask,
                   const LayerParams& lp, const MultiRelationalGraph& g,
                   const ModelOptions& options, bool diffuse, DenseTensor& z, FlopCounter* flops);

/// Accumulates dL/dw_mix and dL/dr_mix into `grad`; writes dL/d(input) into
/// `d_input` when it is non-null (before the dropout mask is applied).
void backprop_feed(const FeedCache& cache, const LayerParams& lp, const MultiRelationalGraph& g,
                   const DenseTensor& dz, LayerParams& grad, DenseTensor* d_input);

}  // namespace grnn::detail

#include "grnn/layers.hpp"

#include <cmath>
#include <string>

#include "feed.hpp"
#include "grnn/errors.hpp"

namespace grnn {

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  for_each_tensor(*this, [&](std::string_view, const DenseTensor& t) { total += t.size(); });
  return total;
}

void for_each_tensor(ModelParams& p,
                     const std::function<void(std::string_view, DenseTensor&)>& fn) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string base = "layers." + std::to_string(l);
    fn(base + ".w_mix", p.layers[l].w_mix);
    fn(base + ".r_mix", p.layers[l].r_mix);
  }
  for (std::size_t l = 0; l < p.input_feeds.size(); ++l) {
    const std::string base = "input_feeds." + std::to_string(l);
    fn(base + ".w_mix", p.input_feeds[l].w_mix);
    fn(base + ".r_mix", p.input_feeds[l].r_mix);
  }
  fn("output.relation_weights", p.output.relation_weights);
  fn("output.bias", p.output.bias);
}

void for_each_tensor(const ModelParams& p,
                     const std::function<void(std::string_view, const DenseTensor&)>& fn) {
  for_each_tensor(const_cast<ModelParams&>(p),
                  [&](std::string_view name, DenseTensor& t) { fn(name, t); });
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for_each_tensor(z, [](std::string_view, DenseTensor& t) { t.fill(0.0); });
  return z;
}

namespace {

LayerParams make_layer(std::size_t p_in, std::size_t p_out, const ModelShape& s, Rng& rng) {
  LayerParams lp;
  const std::size_t rel = s.relations;
  lp.w_mix = s.sharing == WeightSharing::shared ? DenseTensor({p_in, rel, p_out})
                                               : DenseTensor({p_in, s.num_nodes, rel, p_out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(p_in));
  for (double& v : lp.w_mix.values()) v = bound * (2.0 * rng.uniform() - 1.0);
  lp.r_mix = DenseTensor({rel, rel, p_out});
  for (std::size_t i = 0; i < rel; ++i) {
    for (std::size_t p = 0; p < p_out; ++p) lp.r_mix(i, i, p) = 1.0;
  }
  return lp;
}

}  // namespace

ModelParams init_params(const ModelShape& shape, Rng& rng) {
  if (shape.features == 0 || shape.classes == 0 || shape.relations == 0) {
    throw ParameterError("model widths and relation count must be positive");
  }
  if (shape.sharing == WeightSharing::per_node && shape.num_nodes == 0) {
    throw ParameterError("per-node weights need the node count");
  }
  std::vector<std::size_t> widths{shape.features};
  widths.insert(widths.end(), shape.hidden.begin(), shape.hidden.end());
  widths.push_back(shape.classes);
  ModelParams p;
  Rng hidden_rng = rng.split(0);
  Rng feed_rng = rng.split(1);
  for (std::size_t l = 1; l < widths.size(); ++l) {
    p.layers.push_back(make_layer(widths[l - 1], widths[l], shape, hidden_rng));
    p.input_feeds.push_back(make_layer(shape.features, widths[l], shape, feed_rng));
  }
  p.output.relation_weights =
      DenseTensor({shape.relations}, 1.0 / static_cast<double>(shape.relations));
  p.output.bias = DenseTensor({shape.classes});
  return p;
}

DenseTensor init_input(const DenseTensor& x, std::size_t relations) {
  if (x.rank() != 2) throw ShapeError("features must be rank-2");
  const std::size_t n = x.dim(0), f = x.dim(1);
  DenseTensor out({n, relations, f});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < relations; ++i) {
      std::copy_n(x.data() + r * f, f, out.data() + (r * relations + i) * f);
    }
  }
  return out;
}

DenseTensor aggregate(const DenseTensor& h_prev, const MultiRelationalGraph& g,
                      FlopCounter* flops) {
  if (h_prev.rank() != 3 || h_prev.dim(0) != g.num_nodes() ||
      h_prev.dim(1) != g.num_relations()) {
    throw ShapeError("aggregate: tensor " + shape_string(h_prev.shape()) + " does not match " +
                     std::to_string(g.num_nodes()) + " nodes x " +
                     std::to_string(g.num_relations()) + " relations");
  }
  const std::size_t rel = h_prev.dim(1), width = h_prev.dim(2);
  DenseTensor out(h_prev.shape());
  for (std::size_t i = 0; i < rel; ++i) {
    spmm_strided(g.relation(i), h_prev.data() + i * width, rel * width, out.data() + i * width,
                 rel * width, width, flops);
  }
  return out;
}

namespace {

void check_mix_shapes(const DenseTensor& h, const LayerParams& lp) {
  if (h.rank() != 3) throw ShapeError("mix expects an N x I x P tensor");
  const std::size_t n = h.dim(0), rel = h.dim(1), p_in = h.dim(2);
  const bool ok_w = lp.per_node()
                        ? (lp.w_mix.dim(0) == p_in && lp.w_mix.dim(1) == n && lp.w_mix.dim(2) == rel)
                        : (lp.w_mix.rank() == 3 && lp.w_mix.dim(0) == p_in && lp.w_mix.dim(1) == rel);
  const bool ok_r = lp.r_mix.rank() == 3 && lp.r_mix.dim(0) == rel && lp.r_mix.dim(1) == rel &&
                    lp.r_mix.dim(2) == lp.out_width();
  if (!ok_w || !ok_r) {
    throw ShapeError("mix: input " + shape_string(h.shape()) + " incompatible with w_mix " +
                     shape_string(lp.w_mix.shape()) + " and r_mix " +
                     shape_string(lp.r_mix.shape()));
  }
}

/// Flat offset of w[f, (n,) j, p].
inline std::size_t w_offset(const LayerParams& lp, std::size_t n_nodes, std::size_t rel,
                            std::size_t p_out, std::size_t f, std::size_t n, std::size_t j,
                            std::size_t p) {
  return lp.per_node() ? ((f * n_nodes + n) * rel + j) * p_out + p : (f * rel + j) * p_out + p;
}

}  // namespace

DenseTensor mix(const DenseTensor& h, const LayerParams& lp, MixingIndex mixing) {
  check_mix_shapes(h, lp);
  const std::size_t n_nodes = h.dim(0), rel = h.dim(1), p_in = h.dim(2);
  const std::size_t p_out = lp.out_width();
  DenseTensor z({n_nodes, rel, p_out});
  const double* w = lp.w_mix.data();
  for (std::size_t n = 0; n < n_nodes; ++n) {
    for (std::size_t i = 0; i < rel; ++i) {
      for (std::size_t j = 0; j < rel; ++j) {
        const std::size_t src = mixing == MixingIndex::cross ? j : i;
        const double* hv = h.data() + (n * rel + src) * p_in;
        for (std::size_t p = 0; p < p_out; ++p) {
          const double r = lp.r_mix(i, j, p);
          if (r == 0.0) continue;
          double inner = 0.0;
          for (std::size_t f = 0; f < p_in; ++f) {
            inner += hv[f] * w[w_offset(lp, n_nodes, rel, p_out, f, n, j, p)];
          }
          z(n, i, p) += r * inner;
        }
      }
    }
  }
  return z;
}

DenseTensor recurrent_linear(const DenseTensor& h_prev, const DenseTensor& x_input,
                             const MultiRelationalGraph& g, const LayerParams& theta_z,
                             const LayerParams& theta_x, const ModelOptions& options) {
  DenseTensor z = mix(aggregate(h_prev, g), theta_z, options.mixing);
  const DenseTensor feed = options.skip == SkipFeed::diffused ? aggregate(x_input, g) : x_input;
  const DenseTensor zx = mix(feed, theta_x, options.mixing);
  if (zx.shape() != z.shape()) {
    throw ShapeError("recurrent_linear: summands " + shape_string(z.shape()) + " and " +
                     shape_string(zx.shape()) + " differ");
  }
  for (std::size_t k = 0; k < z.size(); ++k) z[k] += zx[k];
  return z;
}

DenseTensor output_logits(const DenseTensor& h_last, const OutputParams& out) {
  if (h_last.rank() != 3 || h_last.dim(1) != out.relation_weights.size() ||
      h_last.dim(2) != out.bias.size()) {
    throw ShapeError("output layer: tensor " + shape_string(h_last.shape()) +
                     " does not match relation weights " +
                     shape_string(out.relation_weights.shape()) + " and bias " +
                     shape_string(out.bias.shape()));
  }
  const std::size_t n = h_last.dim(0), rel = h_last.dim(1), k = h_last.dim(2);
  DenseTensor logits({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      double s = out.bias[c];
      for (std::size_t i = 0; i < rel; ++i) s += out.relation_weights[i] * h_last(r, i, c);
      logits(r, c) = s;
    }
  }
  return logits;
}

DenseTensor output_layer(const DenseTensor& h_last, const OutputParams& out) {
  return softmax_rows(output_logits(h_last, out));
}

InputCache::InputCache(const DenseTensor& x, const MultiRelationalGraph& g, bool with_aggregated)
    : replicated_(std::make_shared<DenseTensor>(init_input(x, g.num_relations()))) {
  if (x.dim(0) != g.num_nodes()) {
    throw ShapeError("feature rows " + std::to_string(x.dim(0)) + " do not match " +
                     std::to_string(g.num_nodes()) + " graph nodes");
  }
  if (with_aggregated) aggregated_ = std::make_shared<DenseTensor>(aggregate(*replicated_, g));
}

namespace {
bool wants_aggregated(std::size_t features, const ModelParams& params,
                      const ModelOptions& options) {
  if (options.sharing != WeightSharing::shared || options.mixing != MixingIndex::cross) {
    return true;
  }
  for (const auto& lp : params.layers) {
    if (features <= lp.out_width()) return true;
  }
  return false;
}
}  // namespace

InputCache::InputCache(const DenseTensor& x, const MultiRelationalGraph& g,
                       const ModelParams& params, const ModelOptions& options)
    : InputCache(x, g, wants_aggregated(x.dim(1), params, options)) {}

void validate_params(const ModelParams& params, const MultiRelationalGraph& g,
                     std::size_t features) {
  const std::size_t rel = g.num_relations();
  if (params.layers.empty()) throw ShapeError("model needs at least one layer");
  if (params.layers.size() != params.input_feeds.size()) {
    throw ShapeError("layer and input-feed counts differ");
  }
  if (params.num_relations() != rel) {
    throw ShapeError("model built for " + std::to_string(params.num_relations()) +
                     " relations, graph has " + std::to_string(rel));
  }
  std::size_t width = features;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& lz = params.layers[l];
    const auto& lx = params.input_feeds[l];
    for (const LayerParams* lp : {&lz, &lx}) {
      const std::size_t want_in = lp == &lz ? width : features;
      const bool node_ok = !lp->per_node() || lp->w_mix.dim(1) == g.num_nodes();
      if (lp->in_width() != want_in || lp->relations() != rel || !node_ok ||
          lp->w_mix.dim(lp->w_mix.rank() - 2) != rel) {
        throw ShapeError("layer " + std::to_string(l) + " w_mix " +
                         shape_string(lp->w_mix.shape()) + " does not chain");
      }
    }
    if (lz.out_width() != lx.out_width()) {
      throw ShapeError("layer " + std::to_string(l) + " feed widths differ");
    }
    width = lz.out_width();
  }
  if (width != params.num_classes()) {
    throw ShapeError("last layer width " + std::to_string(width) + " != class count " +
                     std::to_string(params.num_classes()));
  }
}

namespace detail {

FeedCache run_feed(std::shared_ptr<const DenseTensor> input,
                   std::shared_ptr<const DenseTensor> precomputed_aggregated, DenseTensor mask,
                   const LayerParams& lp, const MultiRelationalGraph& g,
                   const ModelOptions& options, bool diffuse, DenseTensor& z, FlopCounter* flops) {
  FeedCache c;
  c.input = std::move(input);
  c.mask = std::move(mask);
  c.mixing = options.mixing;
  c.diffused = diffuse;
  c.fast = !lp.per_node() && options.mixing == MixingIndex::cross;

  const DenseTensor& a = *c.input;
  const std::size_t n_nodes = a.dim(0), rel = a.dim(1), p_in = a.dim(2);
  const std::size_t p_out = lp.out_width();

  auto aggregated_input = [&]() -> std::shared_ptr<const DenseTensor> {
    if (!diffuse) return c.input;
    if (precomputed_aggregated) return precomputed_aggregated;
    return std::make_shared<DenseTensor>(aggregate(a, g, flops));
  };

  if (!c.fast) {
    c.aggregate_first = true;
    c.aggregated = aggregated_input();
    const DenseTensor zf = mix(*c.aggregated, lp, options.mixing);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += zf[k];
    return c;
  }

  check_mix_shapes(a, lp);
  c.aggregate_first = !diffuse || precomputed_aggregated != nullptr || p_in <= p_out;
  const double* w = lp.w_mix.data();
  c.transformed = DenseTensor({n_nodes, rel, p_out});
  double* t = c.transformed.data();

  // out[n, j, :] += sum_f src[n, j, f] * w[f, j, :], skipping zero inputs.
  auto feature_mix = [&](const DenseTensor& src, double* out) {
    const double* s = src.data();
    for (std::size_t n = 0; n < n_nodes; ++n) {
      for (std::size_t j = 0; j < rel; ++j) {
        const double* sv = s + (n * rel + j) * p_in;
        double* o = out + (n * rel + j) * p_out;
        for (std::size_t f = 0; f < p_in; ++f) {
          const double v = sv[f];
          if (v == 0.0) continue;
          const double* wr = w + (f * rel + j) * p_out;
          for (std::size_t p = 0; p < p_out; ++p) o[p] += v * wr[p];
        }
      }
    }
  };

  if (c.aggregate_first) {
    c.aggregated = aggregated_input();
    feature_mix(*c.aggregated, t);
  } else {
    DenseTensor v({n_nodes, rel, p_out});
    feature_mix(a, v.data());
    for (std::size_t j = 0; j < rel; ++j) {
      spmm_strided(g.relation(j), v.data() + j * p_out, rel * p_out, t + j * p_out, rel * p_out,
                   p_out, flops);
    }
  }

  const double* r = lp.r_mix.data();
  double* zd = z.data();
  for (std::size_t n = 0; n < n_nodes; ++n) {
    for (std::size_t i = 0; i < rel; ++i) {
      double* zo = zd + (n * rel + i) * p_out;
      for (std::size_t j = 0; j < rel; ++j) {
        const double* tj = t + (n * rel + j) * p_out;
        const double* rij = r + (i * rel + j) * p_out;
        for (std::size_t p = 0; p < p_out; ++p) zo[p] += rij[p] * tj[p];
      }
    }
  }
  return c;
}

}  // namespace detail

ForwardPass forward(const DenseTensor& x, const MultiRelationalGraph& g, const ModelParams& params,
                    const ModelOptions& options, const DropoutPlan* dropout, FlopCounter* flops) {
  const bool reuse = dropout == nullptr || dropout->keep_prob == 1.0;
  const InputCache inputs(x, g, reuse && wants_aggregated(x.dim(1), params, options));
  return forward(inputs, g, params, options, dropout, flops);
}

ForwardPass forward(const InputCache& inputs, const MultiRelationalGraph& g,
                    const ModelParams& params, const ModelOptions& options,
                    const DropoutPlan* dropout, FlopCounter* flops) {
  const auto& x0 = inputs.replicated();
  validate_params(params, g, x0->dim(2));
  const bool drop = dropout != nullptr && dropout->keep_prob < 1.0;
  const bool diffuse_skip = options.skip == SkipFeed::diffused;

  ForwardPass pass;
  std::shared_ptr<const DenseTensor> h_prev = x0;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const LayerParams& lz = params.layers[l];
    const LayerParams& lx = params.input_feeds[l];
    LayerActivations act;
    act.z = DenseTensor({g.num_nodes(), g.num_relations(), lz.out_width()});

    std::shared_ptr<const DenseTensor> hidden_in = h_prev;
    std::shared_ptr<const DenseTensor> skip_in = x0;
    DenseTensor hidden_mask;
    if (drop) {
      Rng hidden_rng = dropout->stream.split(2 * l);
      Rng skip_rng = dropout->stream.split(2 * l + 1);
      auto dropped = std::make_shared<DenseTensor>(*h_prev);
      hidden_mask = dropout_nonzero(*dropped, dropout->keep_prob, hidden_rng);
      hidden_in = std::move(dropped);
      auto dropped_x = std::make_shared<DenseTensor>(*x0);
      dropout_nonzero(*dropped_x, dropout->keep_prob, skip_rng);
      skip_in = std::move(dropped_x);
    }
    // The cached diffusion of X is only valid for undropped feature inputs.
    const auto hidden_agg = (l == 0 && !drop) ? inputs.aggregated() : nullptr;
    const auto skip_agg = !drop ? inputs.aggregated() : nullptr;

    act.hidden = detail::run_feed(hidden_in, hidden_agg, std::move(hidden_mask), lz, g, options,
                                  true, act.z, flops);
    act.skip =
        detail::run_feed(skip_in, skip_agg, {}, lx, g, options, diffuse_skip, act.z, flops);
    act.h = relu(act.z);
    pass.layers.push_back(std::move(act));
    h_prev = std::make_shared<const DenseTensor>(pass.layers.back().h);
  }
  pass.logits = output_logits(pass.layers.back().h, params.output);
  pass.y_hat = softmax_rows(pass.logits);
  return pass;
}

}  // namespace grnn

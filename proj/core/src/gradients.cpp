#include "grnn/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "feed.hpp"
#include "grnn/errors.hpp"
#include "json.hpp"

namespace grnn {

namespace detail {

void backprop_feed(const FeedCache& c, const LayerParams& lp, const MultiRelationalGraph& g,
                   const DenseTensor& dz, LayerParams& grad, DenseTensor* d_input) {
  const DenseTensor& a = *c.input;
  const std::size_t n_nodes = a.dim(0), rel = a.dim(1), p_in = a.dim(2);
  const std::size_t p_out = lp.out_width();
  const double* w = lp.w_mix.data();
  const double* r = lp.r_mix.data();
  double* dw = grad.w_mix.data();
  double* dr = grad.r_mix.data();
  const double* gz = dz.data();

  // dU (or dA directly for the undiffused / transform-first cases).
  DenseTensor d_pre;
  if (d_input != nullptr) d_pre = DenseTensor({n_nodes, rel, p_in});

  if (!c.fast) {
    const DenseTensor& u = *c.aggregated;
    const bool cross = c.mixing == MixingIndex::cross;
    const bool per_node = lp.per_node();
    for (std::size_t n = 0; n < n_nodes; ++n) {
      for (std::size_t i = 0; i < rel; ++i) {
        for (std::size_t j = 0; j < rel; ++j) {
          const std::size_t src = cross ? j : i;
          const double* uv = u.data() + (n * rel + src) * p_in;
          double* du = d_input ? d_pre.data() + (n * rel + src) * p_in : nullptr;
          for (std::size_t p = 0; p < p_out; ++p) {
            const double gval = gz[(n * rel + i) * p_out + p];
            if (gval == 0.0) continue;
            const std::size_t rk = (i * rel + j) * p_out + p;
            const double coeff = gval * r[rk];
            double inner = 0.0;
            for (std::size_t f = 0; f < p_in; ++f) {
              const std::size_t wk = per_node ? ((f * n_nodes + n) * rel + j) * p_out + p
                                              : (f * rel + j) * p_out + p;
              inner += uv[f] * w[wk];
              dw[wk] += coeff * uv[f];
              if (du) du[f] += coeff * w[wk];
            }
            dr[rk] += gval * inner;
          }
        }
      }
    }
  } else {
    const double* t = c.transformed.data();
    // dT[n, j, p] = sum_i R[i, j, p] dZ[n, i, p]; dR[i, j, p] = sum_n dZ[n, i, p] T[n, j, p].
    DenseTensor d_t({n_nodes, rel, p_out});
    double* dt = d_t.data();
    for (std::size_t n = 0; n < n_nodes; ++n) {
      for (std::size_t i = 0; i < rel; ++i) {
        const double* gzi = gz + (n * rel + i) * p_out;
        for (std::size_t j = 0; j < rel; ++j) {
          const double* rij = r + (i * rel + j) * p_out;
          double* drij = dr + (i * rel + j) * p_out;
          const double* tj = t + (n * rel + j) * p_out;
          double* dtj = dt + (n * rel + j) * p_out;
          for (std::size_t p = 0; p < p_out; ++p) {
            dtj[p] += rij[p] * gzi[p];
            drij[p] += gzi[p] * tj[p];
          }
        }
      }
    }

    // Gradient of out = src * w, given d(out) = g: dW += srcᵀ g, d(src) = g wᵀ.
    auto feature_mix_backward = [&](const DenseTensor& src, const double* gout, double* dsrc) {
      const double* s = src.data();
      for (std::size_t n = 0; n < n_nodes; ++n) {
        for (std::size_t j = 0; j < rel; ++j) {
          const double* sv = s + (n * rel + j) * p_in;
          const double* go = gout + (n * rel + j) * p_out;
          for (std::size_t f = 0; f < p_in; ++f) {
            const double v = sv[f];
            if (v == 0.0) continue;
            double* dwr = dw + (f * rel + j) * p_out;
            for (std::size_t p = 0; p < p_out; ++p) dwr[p] += v * go[p];
          }
          if (dsrc != nullptr) {
            double* ds = dsrc + (n * rel + j) * p_in;
            for (std::size_t f = 0; f < p_in; ++f) {
              const double* wr = w + (f * rel + j) * p_out;
              double acc = 0.0;
              for (std::size_t p = 0; p < p_out; ++p) acc += wr[p] * go[p];
              ds[f] = acc;
            }
          }
        }
      }
    };

    if (c.aggregate_first) {
      feature_mix_backward(*c.aggregated, dt, d_input ? d_pre.data() : nullptr);
    } else {
      DenseTensor d_v({n_nodes, rel, p_out});
      for (std::size_t j = 0; j < rel; ++j) {
        spmm_strided(g.transposed(j), dt + j * p_out, rel * p_out, d_v.data() + j * p_out,
                     rel * p_out, p_out);
      }
      feature_mix_backward(a, d_v.data(), d_input ? d_pre.data() : nullptr);
      if (d_input != nullptr) *d_input = std::move(d_pre);
      return;
    }
  }

  if (d_input == nullptr) return;
  if (!c.diffused) {
    *d_input = std::move(d_pre);
    return;
  }
  DenseTensor d_a({n_nodes, rel, p_in});
  for (std::size_t j = 0; j < rel; ++j) {
    spmm_strided(g.transposed(j), d_pre.data() + j * p_in, rel * p_in, d_a.data() + j * p_in,
                 rel * p_in, p_in);
  }
  *d_input = std::move(d_a);
}

}  // namespace detail

Objective::Objective(const DenseTensor& x, const DenseTensor& y, std::vector<std::size_t> ids,
                     const MultiRelationalGraph& g, const ModelParams& layout, RegWeights rw,
                     ModelOptions options, SmoothnessMode smoothness)
    : y_(&y),
      ids_(std::move(ids)),
      g_(&g),
      rw_(rw),
      options_(options),
      inputs_(x, g, layout, options),
      smooth_(smoothness_matrices(g, smoothness)),
      smooth_symmetric_(smoothness == SmoothnessMode::laplacian) {
  if (y.rank() != 2 || y.dim(0) != g.num_nodes()) {
    throw ShapeError("label matrix " + shape_string(y.shape()) + " does not match the graph");
  }
  if (!smooth_symmetric_) {
    for (const auto& m : smooth_) smooth_t_.push_back(m.transpose());
  }
}

Objective::Evaluation Objective::evaluate(const ModelParams& params,
                                          const DropoutPlan* dropout) const {
  Evaluation e;
  e.pass = forward(inputs_, *g_, params, options_, dropout);
  e.loss = total_loss(e.pass.y_hat, *y_, ids_, smooth_, params, rw_);
  return e;
}

std::pair<LossBreakdown, Gradients> Objective::backward(const ModelParams& params,
                                                        const DropoutPlan* dropout) const {
  const ForwardPass pass = forward(inputs_, *g_, params, options_, dropout);
  const LossBreakdown loss = total_loss(pass.y_hat, *y_, ids_, smooth_, params, rw_);
  if (!std::isfinite(loss.total)) return {loss, zeros_like(params)};

  const DenseTensor& y_hat = pass.y_hat;
  const std::size_t n_nodes = y_hat.dim(0), k = y_hat.dim(1);
  const DenseTensor& y = *y_;

  // dL/dŶ.
  DenseTensor g_y({n_nodes, k});
  for (std::size_t n : ids_) {
    for (std::size_t c = 0; c < k; ++c) {
      const double t = y(n, c);
      if (t != 0.0 && y_hat(n, c) >= kLogClamp) g_y(n, c) -= t / y_hat(n, c);
    }
  }
  if (rw_.mu1 != 0.0) {
    for (std::size_t i = 0; i < smooth_.size(); ++i) {
      const DenseTensor my = spmm(smooth_[i], y_hat);
      const DenseTensor mty = smooth_symmetric_ ? DenseTensor{} : spmm(smooth_t_[i], y_hat);
      for (std::size_t q = 0; q < g_y.size(); ++q) {
        g_y[q] += rw_.mu1 * (smooth_symmetric_ ? 2.0 * my[q] : my[q] + mty[q]);
      }
    }
  }

  // Softmax adjoint.
  DenseTensor g_logits({n_nodes, k});
  for (std::size_t n = 0; n < n_nodes; ++n) {
    double dot = 0.0;
    for (std::size_t c = 0; c < k; ++c) dot += g_y(n, c) * y_hat(n, c);
    for (std::size_t c = 0; c < k; ++c) g_logits(n, c) = y_hat(n, c) * (g_y(n, c) - dot);
  }

  Gradients grads = zeros_like(params);
  const std::size_t rel = g_->num_relations();
  const DenseTensor& h_last = pass.layers.back().h;
  DenseTensor g_h(h_last.shape());
  for (std::size_t n = 0; n < n_nodes; ++n) {
    for (std::size_t c = 0; c < k; ++c) {
      const double gl = g_logits(n, c);
      grads.output.bias[c] += gl;
      for (std::size_t i = 0; i < rel; ++i) {
        grads.output.relation_weights[i] += gl * h_last(n, i, c);
        g_h(n, i, c) = params.output.relation_weights[i] * gl;
      }
    }
  }

  for (std::size_t l = params.num_layers(); l-- > 0;) {
    const LayerActivations& act = pass.layers[l];
    DenseTensor g_z = std::move(g_h);
    for (std::size_t q = 0; q < g_z.size(); ++q) {
      if (!(act.z[q] > 0.0)) g_z[q] = 0.0;
    }
    detail::backprop_feed(act.skip, params.input_feeds[l], *g_, g_z, grads.input_feeds[l],
                          nullptr);
    if (l == 0) {
      detail::backprop_feed(act.hidden, params.layers[l], *g_, g_z, grads.layers[l], nullptr);
      break;
    }
    DenseTensor g_in;
    detail::backprop_feed(act.hidden, params.layers[l], *g_, g_z, grads.layers[l], &g_in);
    if (!act.hidden.mask.empty()) {
      for (std::size_t q = 0; q < g_in.size(); ++q) g_in[q] *= act.hidden.mask[q];
    }
    g_h = std::move(g_in);
  }

  if (rw_.mu2 != 0.0) {
    const double scale = 2.0 * rw_.mu2;
    ModelParams& gp = grads;
    std::vector<const DenseTensor*> src;
    for_each_tensor(params, [&](std::string_view, const DenseTensor& t) { src.push_back(&t); });
    std::size_t idx = 0;
    for_each_tensor(gp, [&](std::string_view, DenseTensor& t) {
      const DenseTensor& p = *src[idx++];
      for (std::size_t q = 0; q < t.size(); ++q) t[q] += scale * p[q];
    });
  }
  if (rw_.lambda != 0.0) {
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
      const auto& r = params.layers[l].r_mix;
      auto& gr = grads.layers[l].r_mix;
      for (std::size_t q = 0; q < r.size(); ++q) {
        if (r[q] > 0.0) gr[q] += rw_.lambda;
        else if (r[q] < 0.0) gr[q] -= rw_.lambda;
      }
    }
  }
  return {loss, std::move(grads)};
}

std::pair<LossBreakdown, Gradients> backward(const DenseTensor& x, const DenseTensor& y,
                                             std::span<const std::size_t> ids,
                                             const MultiRelationalGraph& g,
                                             const ModelParams& params, const RegWeights& rw,
                                             const ModelOptions& options,
                                             SmoothnessMode smoothness,
                                             const DropoutPlan* dropout) {
  const Objective obj(x, y, {ids.begin(), ids.end()}, g, params, rw, options, smoothness);
  return obj.backward(params, dropout);
}

namespace {

std::vector<char> activation_pattern(const ForwardPass& pass) {
  std::vector<char> pattern;
  for (const auto& act : pass.layers) {
    for (double v : act.z.values()) pattern.push_back(v > 0.0 ? 1 : 0);
  }
  return pattern;
}

}  // namespace

GradcheckReport finite_diff_check(const Objective& objective, const ModelParams& params,
                                  double eps, std::size_t sample, Rng& rng) {
  // Dropout stays disabled: finite differences need a deterministic objective.
  const auto [loss, grads] = objective.backward(params);
  const auto base_pattern = activation_pattern(objective.evaluate(params).pass);

  struct Coord {
    std::size_t tensor;
    std::size_t index;
  };
  std::vector<std::string> names;
  std::vector<bool> penalized;
  std::vector<Coord> coords;
  for_each_tensor(params, [&](std::string_view name, const DenseTensor& t) {
    const std::size_t ti = names.size();
    names.emplace_back(name);
    penalized.push_back(name.starts_with("layers.") && name.ends_with(".r_mix"));
    for (std::size_t q = 0; q < t.size(); ++q) coords.push_back({ti, q});
  });

  if (sample < coords.size()) {
    for (std::size_t q = 0; q < sample; ++q) {
      const std::size_t pick = q + static_cast<std::size_t>(rng.below(coords.size() - q));
      std::swap(coords[q], coords[pick]);
    }
    coords.resize(sample);
  }

  GradcheckReport report;
  report.eps = eps;
  report.tensors.resize(names.size());
  for (std::size_t t = 0; t < names.size(); ++t) report.tensors[t].name = names[t];

  auto tensor_ref = [](ModelParams& p, std::size_t which) -> DenseTensor& {
    DenseTensor* found = nullptr;
    std::size_t idx = 0;
    for_each_tensor(p, [&](std::string_view, DenseTensor& t) {
      if (idx++ == which) found = &t;
    });
    return *found;
  };

  ModelParams probe = params;
  const ModelParams& gp = grads;
  for (const Coord& c : coords) {
    DenseTensor& target = tensor_ref(probe, c.tensor);
    const double original = target[c.index];
    auto& tc = report.tensors[c.tensor];
    if (penalized[c.tensor] && objective.weights().lambda != 0.0 &&
        std::abs(original) <= eps + 1e-8) {
      ++tc.excluded;
      continue;
    }
    target[c.index] = original + eps;
    const auto plus = objective.evaluate(probe);
    target[c.index] = original - eps;
    const auto minus = objective.evaluate(probe);
    target[c.index] = original;
    if (activation_pattern(plus.pass) != base_pattern ||
        activation_pattern(minus.pass) != base_pattern) {
      ++tc.excluded;
      continue;
    }
    const double fd = (plus.loss.total - minus.loss.total) / (2.0 * eps);
    const double analytic = tensor_ref(const_cast<ModelParams&>(gp), c.tensor)[c.index];
    const double err =
        std::abs(fd - analytic) / std::max({1.0, std::abs(fd), std::abs(analytic)});
    tc.max_rel_error = std::max(tc.max_rel_error, err);
    tc.mean_rel_error += err;
    ++tc.checked;
  }
  for (auto& tc : report.tensors) {
    if (tc.checked) tc.mean_rel_error /= static_cast<double>(tc.checked);
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.checked += tc.checked;
    report.excluded += tc.excluded;
  }
  return report;
}

std::string GradcheckReport::to_json() const {
  nlohmann::ordered_json j;
  j["eps"] = eps;
  j["max_rel_error"] = max_rel_error;
  j["checked"] = checked;
  j["excluded"] = excluded;
  auto& arr = j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : tensors) {
    arr.push_back({{"name", t.name},
                   {"max_rel_error", t.max_rel_error},
                   {"mean_rel_error", t.mean_rel_error},
                   {"checked", t.checked},
                   {"excluded", t.excluded}});
  }
  return j.dump(2);
}

}  // namespace grnn

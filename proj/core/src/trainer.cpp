#include "grnn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "grnn/errors.hpp"

namespace grnn {

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  if (state.t == 0 && state.m.layers.empty() && state.m.num_classes() == 0) {
    state.m = zeros_like(params);
    state.v = zeros_like(params);
  }
  std::vector<DenseTensor*> p, m, v;
  std::vector<const DenseTensor*> g;
  for_each_tensor(params, [&](std::string_view, DenseTensor& t) { p.push_back(&t); });
  for_each_tensor(state.m, [&](std::string_view, DenseTensor& t) { m.push_back(&t); });
  for_each_tensor(state.v, [&](std::string_view, DenseTensor& t) { v.push_back(&t); });
  for_each_tensor(grads, [&](std::string_view, const DenseTensor& t) { g.push_back(&t); });
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ShapeError("adam: gradient layout does not mirror the parameters");
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (g[k]->shape() != p[k]->shape() || m[k]->shape() != p[k]->shape() ||
        v[k]->shape() != p[k]->shape()) {
      throw ShapeError("adam: tensor " + std::to_string(k) + " has shape " +
                       shape_string(g[k]->shape()) + ", parameter " +
                       shape_string(p[k]->shape()));
    }
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    double* pv = p[k]->data();
    double* mv = m[k]->data();
    double* vv = v[k]->data();
    const double* gv = g[k]->data();
    for (std::size_t q = 0; q < p[k]->size(); ++q) {
      mv[q] = beta1 * mv[q] + (1.0 - beta1) * gv[q];
      vv[q] = beta2 * vv[q] + (1.0 - beta2) * gv[q] * gv[q];
      const double m_hat = mv[q] / c1;
      const double v_hat = vv[q] / c2;
      pv[q] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience > max_epochs) throw ConfigError("patience exceeds max_epochs");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep_prob must be in (0, 1]");
  if (rw.mu1 < 0.0 || rw.mu2 < 0.0 || rw.lambda < 0.0) {
    throw ConfigError("regularization weights must be non-negative");
  }
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden widths must be positive");
  }
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "epoch,ce,smooth,l2,l1,total,val_loss,val_acc\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.train.ce << ',' << e.train.smooth << ',' << e.train.l2 << ','
       << e.train.l1 << ',' << e.train.total << ',' << e.val_loss << ',' << e.val_acc << '\n';
  }
  return os.str();
}

MultiRelationalGraph prepare_graph(const MultiRelationalGraph& g, Normalization mode) {
  if (mode == Normalization::none) return g;
  std::vector<SparseMatrix> rel;
  rel.reserve(g.num_relations());
  for (const auto& s : g.relations()) rel.push_back(normalize_relation(s, mode));
  return {g.num_nodes(), std::move(rel), g.names()};
}

double accuracy(const DenseTensor& y_hat, const DenseTensor& y, std::span<const std::size_t> ids) {
  if (ids.empty()) throw ParameterError("accuracy over an empty node list");
  if (y_hat.shape() != y.shape() || y.rank() != 2) {
    throw ShapeError("accuracy: prediction " + shape_string(y_hat.shape()) + " vs labels " +
                     shape_string(y.shape()));
  }
  const std::size_t k = y.dim(1);
  auto argmax = [k](const double* row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (row[c] > row[best]) best = c;
    }
    return best;
  };
  std::size_t correct = 0;
  for (std::size_t n : ids) {
    if (n >= y.dim(0)) throw ParameterError("node id " + std::to_string(n) + " out of range");
    if (argmax(y_hat.data() + n * k) == argmax(y.data() + n * k)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

double evaluate(const ModelParams& params, const Dataset& data, const MultiRelationalGraph& g,
                std::span<const std::size_t> ids, const ModelOptions& options) {
  if (ids.empty()) throw ParameterError("evaluate over an empty node list");
  const ForwardPass pass = forward(data.x, g, params, options);
  return accuracy(pass.y_hat, data.y, ids);
}

TrainResult train(const Dataset& data, const MultiRelationalGraph& g, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.split.val.empty()) throw ParameterError("early stopping needs validation nodes");
  const MultiRelationalGraph graph = prepare_graph(g, cfg.normalization);

  Rng root(cfg.seed);
  Rng init_rng = root.split(0);
  const Rng dropout_root = root.split(1);
  ModelShape shape;
  shape.num_nodes = data.num_nodes();
  shape.features = data.num_features();
  shape.hidden = cfg.hidden;
  shape.classes = data.num_classes();
  shape.relations = graph.num_relations();
  shape.sharing = cfg.sharing;
  ModelParams params = init_params(shape, init_rng);

  const ModelOptions options = cfg.model_options();
  const Objective objective(data.x, data.y, data.split.train, graph, params, cfg.rw, options,
                            cfg.smoothness);

  TrainResult result;
  result.params = params;
  TrainHistory& hist = result.history;
  hist.best_val_loss = std::numeric_limits<double>::infinity();
  AdamState adam;
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const DropoutPlan plan{cfg.keep_prob, dropout_root.split(epoch)};
    auto [loss, grads] = objective.backward(params, cfg.keep_prob < 1.0 ? &plan : nullptr);
    if (!std::isfinite(loss.total)) {
      throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                            " (ce " + std::to_string(loss.ce) + ")");
    }
    adam_step(params, grads, adam, cfg.lr);

    const ForwardPass pass = forward(objective.inputs(), graph, params, options);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = loss;
    rec.val_loss = cross_entropy_masked(pass.y_hat, data.y, data.split.val);
    rec.val_acc = accuracy(pass.y_hat, data.y, data.split.val);
    if (!std::isfinite(rec.val_loss)) {
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    hist.epochs.push_back(rec);

    if (rec.val_loss < hist.best_val_loss) {
      hist.best_val_loss = rec.val_loss;
      hist.best_epoch = epoch;
      result.params = params;
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= cfg.patience) break;
  }

  if (!data.split.test.empty()) {
    const ForwardPass pass = forward(objective.inputs(), graph, result.params, options);
    hist.test_acc = accuracy(pass.y_hat, data.y, data.split.test);
  }
  return result;
}

}  // namespace grnn

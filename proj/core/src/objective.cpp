#include "grnn/objective.hpp"

#include <algorithm>
#include <cmath>

#include "grnn/errors.hpp"
#include "json.hpp"

namespace grnn {

void LabeledSplit::validate(std::size_t num_nodes) const {
  if (train.empty()) throw FormatError("split has no training nodes");
  std::vector<char> owner(num_nodes, 0);
  const std::pair<const std::vector<std::size_t>*, char> parts[] = {
      {&train, 1}, {&val, 2}, {&test, 3}};
  for (const auto& [ids, tag] : parts) {
    for (std::size_t id : *ids) {
      if (id >= num_nodes) {
        throw FormatError("split node id " + std::to_string(id) + " out of range");
      }
      if (owner[id] != 0 && owner[id] != tag) {
        throw FormatError("node " + std::to_string(id) + " appears in two splits");
      }
      owner[id] = tag;
    }
  }
}

double cross_entropy_masked(const DenseTensor& y_hat, const DenseTensor& y,
                            std::span<const std::size_t> ids) {
  if (ids.empty()) throw ParameterError("cross entropy over an empty node list");
  if (y_hat.shape() != y.shape() || y_hat.rank() != 2) {
    throw ShapeError("cross entropy: prediction " + shape_string(y_hat.shape()) + " vs labels " +
                     shape_string(y.shape()));
  }
  const std::size_t k = y.dim(1);
  double loss = 0.0;
  for (std::size_t n : ids) {
    if (n >= y.dim(0)) throw ParameterError("node id " + std::to_string(n) + " out of range");
    for (std::size_t c = 0; c < k; ++c) {
      const double t = y(n, c);
      if (t != 0.0) loss -= t * std::log(std::max(y_hat(n, c), kLogClamp));
    }
  }
  return loss;
}

std::vector<SparseMatrix> smoothness_matrices(const MultiRelationalGraph& g, SmoothnessMode mode) {
  std::vector<SparseMatrix> out;
  out.reserve(g.num_relations());
  for (const auto& s : g.relations()) {
    out.push_back(mode == SmoothnessMode::laplacian ? laplacian(s) : s);
  }
  return out;
}

double smoothness_reg(const DenseTensor& y_hat, std::span<const SparseMatrix> matrices) {
  const std::size_t k = y_hat.dim(1);
  double total = 0.0;
  for (const auto& m : matrices) {
    // Tr(Ŷᵀ M Ŷ) = sum_{r,c} M[r,c] <ŷ_r, ŷ_c>.
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto cols = m.row_cols(r);
      const auto vals = m.row_values(r);
      const double* yr = y_hat.data() + r * k;
      for (std::size_t e = 0; e < cols.size(); ++e) {
        const double* yc = y_hat.data() + cols[e] * k;
        double dot = 0.0;
        for (std::size_t c = 0; c < k; ++c) dot += yr[c] * yc[c];
        total += vals[e] * dot;
      }
    }
  }
  return total;
}

double smoothness_reg(const DenseTensor& y_hat, const MultiRelationalGraph& g,
                      SmoothnessMode mode) {
  const auto m = smoothness_matrices(g, mode);
  return smoothness_reg(y_hat, m);
}

double l2_reg(const ModelParams& params) {
  double s = 0.0;
  for_each_tensor(params, [&](std::string_view, const DenseTensor& t) {
    for (double v : t.values()) s += v * v;
  });
  return s;
}

double l1_relations(const ModelParams& params) {
  double s = 0.0;
  for (const auto& lp : params.layers) {
    for (double v : lp.r_mix.values()) s += std::abs(v);
  }
  return s;
}

LossBreakdown total_loss(const DenseTensor& y_hat, const DenseTensor& y,
                         std::span<const std::size_t> ids, std::span<const SparseMatrix> smoothness,
                         const ModelParams& params, const RegWeights& rw) {
  LossBreakdown b;
  b.ce = cross_entropy_masked(y_hat, y, ids);
  b.smooth = rw.mu1 != 0.0 ? rw.mu1 * smoothness_reg(y_hat, smoothness) : 0.0;
  b.l2 = rw.mu2 != 0.0 ? rw.mu2 * l2_reg(params) : 0.0;
  b.l1 = rw.lambda != 0.0 ? rw.lambda * l1_relations(params) : 0.0;
  b.total = b.ce + b.smooth + b.l2 + b.l1;
  return b;
}

LossBreakdown total_loss(const DenseTensor& y_hat, const DenseTensor& y,
                         std::span<const std::size_t> ids, const MultiRelationalGraph& g,
                         const ModelParams& params, const RegWeights& rw, SmoothnessMode mode) {
  const auto m = smoothness_matrices(g, mode);
  return total_loss(y_hat, y, ids, m, params, rw);
}

std::string loss_json_line(const LossBreakdown& b, long epoch) {
  nlohmann::ordered_json j;
  if (epoch >= 0) j["epoch"] = epoch;
  j["ce"] = b.ce;
  j["smooth"] = b.smooth;
  j["l2"] = b.l2;
  j["l1"] = b.l1;
  j["total"] = b.total;
  return j.dump();
}

}  // namespace grnn

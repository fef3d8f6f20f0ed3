#include "grnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "grnn/errors.hpp"

namespace grnn {

MultiRelationalGraph::MultiRelationalGraph(std::size_t num_nodes,
                                           std::vector<SparseMatrix> relations,
                                           std::vector<std::string> names)
    : num_nodes_(num_nodes), relations_(std::move(relations)), names_(std::move(names)) {
  if (relations_.empty()) throw ParameterError("a graph needs at least one relation");
  for (std::size_t i = 0; i < relations_.size(); ++i) {
    const auto& s = relations_[i];
    if (s.rows() != num_nodes_ || s.cols() != num_nodes_) {
      throw ShapeError("relation " + std::to_string(i) + " is " + std::to_string(s.rows()) + "x" +
                       std::to_string(s.cols()) + ", expected " + std::to_string(num_nodes_) +
                       " square");
    }
  }
  if (names_.empty()) {
    for (std::size_t i = 0; i < relations_.size(); ++i) names_.push_back("r" + std::to_string(i));
  }
  if (names_.size() != relations_.size()) {
    throw ParameterError("relation name count does not match relation count");
  }
  transposed_.reserve(relations_.size());
  for (const auto& s : relations_) transposed_.push_back(s.transpose());
}

std::size_t MultiRelationalGraph::total_nnz() const {
  std::size_t total = 0;
  for (const auto& s : relations_) total += s.nnz();
  return total;
}

MultiRelationalGraph MultiRelationalGraph::permuted_relations(
    const std::vector<std::size_t>& order) const {
  std::vector<SparseMatrix> rel;
  std::vector<std::string> names;
  for (std::size_t k : order) {
    rel.push_back(relations_.at(k));
    names.push_back(names_.at(k));
  }
  return {num_nodes_, std::move(rel), std::move(names)};
}

std::vector<std::size_t> neighborhood(const MultiRelationalGraph& g, std::size_t node,
                                      std::size_t relation) {
  if (relation >= g.num_relations()) {
    throw ParameterError("relation index " + std::to_string(relation) + " out of range");
  }
  if (node >= g.num_nodes()) {
    throw ParameterError("node index " + std::to_string(node) + " out of range");
  }
  const auto cols = g.relation(relation).row_cols(node);
  return {cols.begin(), cols.end()};
}

namespace {

struct SparseRow {
  std::vector<std::size_t> idx;
  std::vector<double> val;
};

double squared_distance(const SparseRow& a, const SparseRow& b) {
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.idx.size() || j < b.idx.size()) {
    double diff;
    if (j == b.idx.size() || (i < a.idx.size() && a.idx[i] < b.idx[j])) {
      diff = a.val[i++];
    } else if (i == a.idx.size() || b.idx[j] < a.idx[i]) {
      diff = b.val[j++];
    } else {
      diff = a.val[i++] - b.val[j++];
    }
    d += diff * diff;
  }
  return d;
}

}  // namespace

SparseMatrix build_knn_graph(const DenseTensor& features, std::size_t kappa) {
  if (features.rank() != 2) throw ShapeError("features must be rank-2");
  const std::size_t n = features.dim(0), f = features.dim(1);
  if (kappa < 1) throw ParameterError("kappa must be at least 1");
  if (kappa >= n) {
    throw ParameterError("kappa " + std::to_string(kappa) + " must be below the node count " +
                         std::to_string(n));
  }
  std::vector<SparseRow> rows(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      const double v = features(r, c);
      if (v != 0.0) {
        rows[r].idx.push_back(c);
        rows[r].val.push_back(v);
      }
    }
  }
  std::vector<Triplet> edges;
  edges.reserve(2 * n * kappa);
  std::vector<double> dist(n);
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) dist[c] = c == r ? 0.0 : squared_distance(rows[r], rows[c]);
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    order.erase(order.begin() + static_cast<std::ptrdiff_t>(r));
    const auto closer = [&](std::size_t a, std::size_t b) {
      return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kappa),
                      order.end(), closer);
    for (std::size_t k = 0; k < kappa; ++k) {
      edges.push_back({r, order[k], 1.0});
      edges.push_back({order[k], r, 1.0});
    }
  }
  // Union: a pair selected from both ends must still carry weight 1.
  std::sort(edges.begin(), edges.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const Triplet& a, const Triplet& b) {
                            return a.row == b.row && a.col == b.col;
                          }),
              edges.end());
  return SparseMatrix::from_triplets(n, n, std::move(edges));
}

SparseMatrix normalize_relation(const SparseMatrix& s, Normalization mode) {
  if (s.rows() != s.cols()) throw ShapeError("normalize_relation expects a square matrix");
  const std::size_t n = s.rows();
  switch (mode) {
    case Normalization::none:
      return s;
    case Normalization::row: {
      const auto deg = s.row_sums();
      auto t = s.triplets();
      for (auto& e : t) e.weight = deg[e.row] != 0.0 ? e.weight / deg[e.row] : 0.0;
      return SparseMatrix::from_triplets(n, n, std::move(t));
    }
    case Normalization::sym_selfloop: {
      auto t = s.triplets();
      for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
      const auto with_loops = SparseMatrix::from_triplets(n, n, std::move(t));
      const auto deg = with_loops.row_sums();
      std::vector<double> scale(n);
      for (std::size_t i = 0; i < n; ++i) scale[i] = deg[i] > 0.0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
      auto out = with_loops.triplets();
      for (auto& e : out) e.weight = scale[e.row] * e.weight * scale[e.col];
      return SparseMatrix::from_triplets(n, n, std::move(out));
    }
  }
  return s;
}

SparseMatrix laplacian(const SparseMatrix& s) {
  if (s.rows() != s.cols()) throw ShapeError("laplacian expects a square matrix");
  const std::size_t n = s.rows();
  std::vector<Triplet> t;
  t.reserve(2 * s.nnz() + n);
  std::vector<double> degree(n, 0.0);
  for (const auto& e : s.triplets()) {
    const double half = 0.5 * e.weight;
    t.push_back({e.row, e.col, -half});
    t.push_back({e.col, e.row, -half});
    degree[e.row] += half;
    degree[e.col] += half;
  }
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, degree[i]});
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

DenseTensor perturb_features(const DenseTensor& x, const PerturbationSpec& spec, Rng& rng) {
  if (!(spec.snr > 0.0)) throw ParameterError("snr must be positive");
  const double power = mean_square(x);
  if (power == 0.0) throw ParameterError("SNR is undefined for an all-zero feature matrix");
  const double sigma = std::sqrt(power / spec.snr);
  DenseTensor out = x;
  for (double& v : out.values()) v += sigma * rng.normal();
  return out;
}

SparseMatrix perturb_slice(const SparseMatrix& s, double snr, Rng& rng) {
  if (!(snr > 0.0)) throw ParameterError("snr must be positive");
  if (s.nnz() == 0) throw ParameterError("cannot perturb an empty relation slice");
  const std::size_t rows = s.rows(), cols = s.cols();
  double energy = 0.0;
  for (double v : s.values()) energy += v * v;
  const double power = energy / (static_cast<double>(rows) * static_cast<double>(cols));
  const double sigma = std::sqrt(power / snr);
  DenseTensor dense({rows, cols});
  for (double& v : dense.values()) v = sigma * rng.normal();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto c = s.row_cols(r);
    const auto w = s.row_values(r);
    for (std::size_t k = 0; k < c.size(); ++k) dense(r, c[k]) += w[k];
  }
  return SparseMatrix::from_dense(dense);
}

MultiRelationalGraph perturb_topology(const MultiRelationalGraph& g, const PerturbationSpec& spec,
                                      const Rng& rng) {
  std::vector<SparseMatrix> rel;
  for (std::size_t i = 0; i < g.num_relations(); ++i) {
    Rng stream = rng.split(i);
    rel.push_back(perturb_slice(g.relation(i), spec.snr, stream));
  }
  return {g.num_nodes(), std::move(rel), g.names()};
}

void write_edge_list(const std::filesystem::path& path, const SparseMatrix& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "src,dst,weight\n";
  out.precision(17);
  for (const auto& e : s.triplets()) out << e.row << ',' << e.col << ',' << e.weight << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

SparseMatrix read_edge_list(const std::filesystem::path& path, std::size_t num_nodes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "src,dst,weight") {
    throw FormatError(path.string() + ": expected header 'src,dst,weight'");
  }
  std::vector<Triplet> t;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    long long src = -1, dst = -1;
    double w = 0.0;
    char c1 = 0, c2 = 0;
    if (!(ss >> src >> c1 >> dst >> c2 >> w) || c1 != ',' || c2 != ',') {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed edge row");
    }
    if (src < 0 || dst < 0 || static_cast<std::size_t>(src) >= num_nodes ||
        static_cast<std::size_t>(dst) >= num_nodes) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": dangling node id");
    }
    t.push_back({static_cast<std::size_t>(src), static_cast<std::size_t>(dst), w});
  }
  return SparseMatrix::from_triplets(num_nodes, num_nodes, std::move(t));
}

void export_graph(const MultiRelationalGraph& g, const std::filesystem::path& dir) {
  for (std::size_t i = 0; i < g.num_relations(); ++i) {
    write_edge_list(dir / ("edges_" + g.name(i) + ".csv"), g.relation(i));
  }
}

MultiRelationalGraph import_graph(const std::filesystem::path& dir,
                                  const std::vector<std::string>& names, std::size_t num_nodes) {
  std::vector<SparseMatrix> rel;
  for (const auto& name : names) {
    rel.push_back(read_edge_list(dir / ("edges_" + name + ".csv"), num_nodes));
  }
  return {num_nodes, std::move(rel), names};
}

}  // namespace grnn

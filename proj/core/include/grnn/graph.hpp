#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "grnn/rng.hpp"
#include "grnn/sparse.hpp"
#include "grnn/tensor.hpp"

namespace grnn {

/// N x N x I adjacency tensor stored as one sparse slice per relation.
///
/// Immutable after construction. Transposed slices are built once up front
/// because the backward pass needs them on every step.
class MultiRelationalGraph {
 public:
  MultiRelationalGraph() = default;
  MultiRelationalGraph(std::size_t num_nodes, std::vector<SparseMatrix> relations,
                       std::vector<std::string> names = {});

  [[nodiscard]] std::size_t num_nodes() const { return num_nodes_; }
  [[nodiscard]] std::size_t num_relations() const { return relations_.size(); }
  [[nodiscard]] const SparseMatrix& relation(std::size_t i) const { return relations_.at(i); }
  [[nodiscard]] const SparseMatrix& transposed(std::size_t i) const { return transposed_.at(i); }
  [[nodiscard]] const std::string& name(std::size_t i) const { return names_.at(i); }
  [[nodiscard]] const std::vector<SparseMatrix>& relations() const { return relations_; }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
  [[nodiscard]] std::size_t total_nnz() const;

  /// Copy with slices reordered so that new slice k is old slice order[k].
  [[nodiscard]] MultiRelationalGraph permuted_relations(const std::vector<std::size_t>& order) const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<SparseMatrix> relations_;
  std::vector<SparseMatrix> transposed_;
  std::vector<std::string> names_;
};

/// {n' : S_i[n, n'] != 0}, ascending.
std::vector<std::size_t> neighborhood(const MultiRelationalGraph& g, std::size_t node,
                                      std::size_t relation);

/// Binary kappa-nearest-neighbour graph under squared Euclidean distance,
/// symmetrized by union. Ties go to the smaller node index.
SparseMatrix build_knn_graph(const DenseTensor& features, std::size_t kappa);

enum class Normalization { none, sym_selfloop, row };

SparseMatrix normalize_relation(const SparseMatrix& s, Normalization mode);

/// L = D - (S + S^T) / 2 with D the row sums of the symmetrized matrix.
SparseMatrix laplacian(const SparseMatrix& s);

enum class PerturbTarget { features, topology };

struct PerturbationSpec {
  PerturbTarget target = PerturbTarget::features;
  /// Linear power ratio mean_square(signal) / noise variance.
  double snr = 1.0;
  std::uint64_t seed = 0;
};

/// X + O with O i.i.d. N(0, mean_square(X) / snr).
DenseTensor perturb_features(const DenseTensor& x, const PerturbationSpec& spec, Rng& rng);

/// One slice plus dense white noise with variance mean_square over all N^2
/// positions divided by snr. The result stores every nonzero position.
SparseMatrix perturb_slice(const SparseMatrix& s, double snr, Rng& rng);

/// Perturbs slice i with the substream rng.split(i).
MultiRelationalGraph perturb_topology(const MultiRelationalGraph& g, const PerturbationSpec& spec,
                                      const Rng& rng);

/// Writes `src,dst,weight` rows with a header line.
void write_edge_list(const std::filesystem::path& path, const SparseMatrix& s);
SparseMatrix read_edge_list(const std::filesystem::path& path, std::size_t num_nodes);

/// One `edges_<relation_name>.csv` per relation.
void export_graph(const MultiRelationalGraph& g, const std::filesystem::path& dir);
MultiRelationalGraph import_graph(const std::filesystem::path& dir,
                                  const std::vector<std::string>& names, std::size_t num_nodes);

}  // namespace grnn

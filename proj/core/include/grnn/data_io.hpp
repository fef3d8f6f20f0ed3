#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "grnn/graph.hpp"
#include "grnn/objective.hpp"
#include "grnn/tensor.hpp"

namespace grnn {

struct Dataset {
  DenseTensor x;  // N x F
  DenseTensor y;  // N x K, one-hot rows
  LabeledSplit split;
  std::optional<MultiRelationalGraph> graph;

  [[nodiscard]] std::size_t num_nodes() const { return x.dim(0); }
  [[nodiscard]] std::size_t num_features() const { return x.dim(1); }
  [[nodiscard]] std::size_t num_classes() const { return y.dim(1); }
  /// Class index per node.
  [[nodiscard]] std::vector<std::size_t> labels() const;

  /// Throws FormatError unless shapes agree, rows of y are one-hot, F >= 1,
  /// K >= 2 and the split is valid.
  void validate() const;
};

DenseTensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes);

/// `labeled` ids drawn uniformly for training; the rest split 20/80 into
/// validation and test. Each list is sorted.
LabeledSplit random_split(std::size_t num_nodes, std::size_t labeled, Rng& rng);

struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t f = 10;
  double variance = 0.4;  // per coordinate
  std::size_t labeled = 200;
};

/// Two balanced Gaussian classes with all-zero and all-one means. Nodes
/// 0..n/2-1 are class 0.
Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// UCI layout: 34 comma-separated numbers then `g` or `b` per line.
Dataset load_ionosphere(const std::filesystem::path& path, std::uint64_t seed,
                        std::size_t labeled = 50);

struct CitationOptions {
  /// Append a kappa-NN feature graph as a second relation when nonzero.
  std::size_t extra_knn = 0;
};

/// Reads features.csv, labels.csv, edges_citation.csv and split.json.
Dataset load_citation(const std::filesystem::path& dir, const CitationOptions& options = {});

/// Writes the canonical four-file layout (plus one edge list per extra
/// relation when a graph is attached).
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Scales each nonzero row to unit L1 norm.
void row_normalize(DenseTensor& x);

}  // namespace grnn

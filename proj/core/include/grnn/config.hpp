#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "grnn/data_io.hpp"
#include "grnn/graph.hpp"
#include "grnn/trainer.hpp"

namespace grnn {

enum class DatasetKind { synthetic, ionosphere, citation };

/// Everything a command needs besides paths given on the command line.
struct ExperimentConfig {
  TrainConfig train;
  DatasetKind dataset = DatasetKind::synthetic;
  std::string data;  // ionosphere file or citation directory
  std::vector<std::uint64_t> seeds;
  /// Relations of the kappa-NN graph, one set per sweep series.
  std::vector<std::vector<std::size_t>> kappa_sets{{5, 10}};
  std::vector<double> snr{0.2, 1.0, 5.0, 25.0};
  PerturbTarget target = PerturbTarget::features;
  std::size_t extra_knn = 0;
  bool row_normalize_features = false;
  SyntheticSpec synthetic;
  std::size_t labeled = 0;  // 0 keeps the dataset default
  double gradcheck_eps = 1e-5;
  std::size_t gradcheck_instances = 20;
  std::size_t gradcheck_sample = 0;  // 0 checks every coordinate
  std::uint64_t gradcheck_seed = 7;
};

/// Parses a flat JSON object. Absent keys keep their defaults; unknown keys
/// and type mismatches throw ConfigError. An empty document is all defaults.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON echo of every field, one key per line and sorted.
std::string config_echo(const ExperimentConfig& cfg);

/// FNV-1a over the canonical echo. Equal configs hash equal.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t h);

/// "3" means three consecutive seeds from `base`; "1,4,9" lists them.
std::vector<std::uint64_t> parse_seed_list(std::string_view text, std::uint64_t base = 0);
/// "5,10;2" gives {{5,10},{2}}.
std::vector<std::vector<std::size_t>> parse_kappa_sets(std::string_view text);
std::vector<double> parse_snr_list(std::string_view text);

std::string_view to_string(Normalization n);
std::string_view to_string(SmoothnessMode m);
std::string_view to_string(DatasetKind k);
std::string_view to_string(PerturbTarget t);

}  // namespace grnn

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "grnn/config.hpp"
#include "grnn/data_io.hpp"
#include "grnn/gradients.hpp"
#include "grnn/graph.hpp"
#include "grnn/trainer.hpp"

namespace grnn {

/// Exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitInput = 2,
  kExitIo = 3,
  kExitDivergence = 4,
};

/// Maps an exception to its exit code.
int exit_code_for(const std::exception& e);

/// Worker count for independent runs: GRNN_THREADS when set, else 1.
std::size_t thread_count_from_env();

/// Calls fn(0..count-1) on up to `threads` workers. The first exception is
/// rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// The dataset a config describes. Synthetic data and the ionosphere split
/// depend on `seed`; citation data does not.
Dataset load_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

/// One kappa-NN relation per entry of `kappas`, named `knn<k>`.
MultiRelationalGraph knn_graph(const DenseTensor& x, const std::vector<std::size_t>& kappas);

/// The graph training uses: the attached graph when present, else the
/// kappa-NN graph for `kappas`.
MultiRelationalGraph dataset_graph(const Dataset& data, const std::vector<std::size_t>& kappas);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};
MeanStd mean_std(const std::vector<double>& v);

struct SeedRun {
  std::uint64_t seed = 0;
  double test_acc = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs = 0;
  double wall_seconds = 0.0;
  TrainResult result;
};

using DatasetSource = std::function<std::shared_ptr<const Dataset>(std::uint64_t)>;

/// Trains once per seed in `cfg.seeds`. `data_for` supplies the dataset for a
/// seed and may return the same instance every time.
std::vector<SeedRun> run_seeds(const ExperimentConfig& cfg, const DatasetSource& data_for,
                               std::size_t threads);

struct SweepRow {
  double snr = 0.0;
  std::vector<std::size_t> kappas;
  MeanStd acc;
  std::vector<double> per_seed;
};

/// For every (snr, kappa set) cell and seed: build the kappa-NN graph from
/// clean features, perturb the target, train and record test accuracy.
std::vector<SweepRow> sweep_snr(const ExperimentConfig& cfg, std::size_t threads);

/// `snr,kappa_set,mean_acc,std_acc,seeds` with kappa sets written as `5+10`.
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct GradcheckSuiteResult {
  std::vector<GradcheckReport> instances;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;

  [[nodiscard]] std::string to_json() const;
};

/// Random small instances (N <= 10, I <= 3, up to 3 layers) cycling through
/// every weight-sharing, mixing, skip-feed and smoothness variant.
GradcheckSuiteResult gradcheck_suite(std::size_t instances, double eps, std::uint64_t seed,
                                     std::size_t sample = 0);

struct CommandArgs {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::string> seeds;
  std::optional<std::string> snr;
  std::optional<std::string> target;
  std::optional<std::string> kappa;
  std::size_t threads = 1;
};

/// Each command catches its own errors, reports them on `err` and returns an
/// exit code. Result files carry no timestamps; wall times go to metadata.json.
int cmd_train(const CommandArgs& args, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const CommandArgs& args, std::ostream& out, std::ostream& err);
int cmd_sweep_snr(const CommandArgs& args, std::ostream& out, std::ostream& err);
int cmd_build_graph(const CommandArgs& args, std::ostream& out, std::ostream& err);

}  // namespace grnn

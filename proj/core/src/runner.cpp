#include "grnn/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "grnn/checkpoint.hpp"
#include "grnn/errors.hpp"
#include "json.hpp"

namespace grnn {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const ShapeError*>(&e)) {
    return kExitInput;
  }
  return kExitFailure;
}

std::size_t thread_count_from_env() {
  const char* v = std::getenv("GRNN_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("GRNN_THREADS must be a positive integer");
  return static_cast<std::size_t>(n);
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

Dataset load_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  Dataset d;
  switch (cfg.dataset) {
    case DatasetKind::synthetic:
      d = gen_synthetic(cfg.synthetic, seed);
      break;
    case DatasetKind::ionosphere:
      if (cfg.data.empty()) throw ConfigError("ionosphere needs a data path");
      d = load_ionosphere(cfg.data, seed, cfg.labeled);
      break;
    case DatasetKind::citation:
      if (cfg.data.empty()) throw ConfigError("citation data needs a directory");
      d = load_citation(cfg.data, {cfg.extra_knn});
      break;
  }
  if (cfg.row_normalize_features) row_normalize(d.x);
  return d;
}

MultiRelationalGraph knn_graph(const DenseTensor& x, const std::vector<std::size_t>& kappas) {
  if (kappas.empty()) throw ParameterError("need at least one kappa");
  std::vector<SparseMatrix> rel;
  std::vector<std::string> names;
  for (std::size_t k : kappas) {
    rel.push_back(build_knn_graph(x, k));
    names.push_back("knn" + std::to_string(k));
  }
  return {x.dim(0), std::move(rel), std::move(names)};
}

MultiRelationalGraph dataset_graph(const Dataset& data, const std::vector<std::size_t>& kappas) {
  if (data.graph) return *data.graph;
  return knn_graph(data.x, kappas);
}

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(v.size()));
  return r;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

SeedRun train_one(const ExperimentConfig& cfg, const Dataset& data,
                  const MultiRelationalGraph& g, std::uint64_t seed) {
  const auto start = Clock::now();
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  SeedRun run;
  run.seed = seed;
  run.result = train(data, g, tc);
  run.test_acc = run.result.history.test_acc;
  run.best_epoch = run.result.history.best_epoch;
  run.epochs = run.result.history.epochs.size();
  run.wall_seconds = seconds_since(start);
  return run;
}

std::string kappa_label(const std::vector<std::size_t>& kappas) {
  std::string s;
  for (std::size_t k : kappas) s += (s.empty() ? "" : "+") + std::to_string(k);
  return s;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : ""));
  }
  const fs::path probe = dir / ".grnn_write_probe";
  {
    std::ofstream p(probe);
    if (!p) throw IoError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

ExperimentConfig resolve_config(const CommandArgs& args) {
  ExperimentConfig cfg = args.config.empty() ? parse_config("") : load_config(args.config);
  if (!args.data.empty()) {
    if (cfg.dataset == DatasetKind::synthetic && cfg.data.empty()) {
      cfg.dataset = fs::is_directory(args.data) ? DatasetKind::citation : DatasetKind::ionosphere;
      if (cfg.dataset == DatasetKind::ionosphere) cfg.labeled = 50;
    }
    cfg.data = args.data;
  }
  if (args.seeds) cfg.seeds = parse_seed_list(*args.seeds, cfg.train.seed);
  if (args.snr) cfg.snr = parse_snr_list(*args.snr);
  if (args.kappa) cfg.kappa_sets = parse_kappa_sets(*args.kappa);
  if (args.target) {
    if (*args.target == "features") {
      cfg.target = PerturbTarget::features;
    } else if (*args.target == "topology") {
      cfg.target = PerturbTarget::topology;
    } else {
      throw ConfigError("--target must be features or topology");
    }
  }
  return cfg;
}

ordered_json dataset_summary(const ExperimentConfig& cfg, const Dataset& d,
                             const MultiRelationalGraph& g) {
  ordered_json j;
  j["kind"] = to_string(cfg.dataset);
  j["nodes"] = d.num_nodes();
  j["features"] = d.num_features();
  j["classes"] = d.num_classes();
  j["relations"] = g.names();
  j["edges"] = g.total_nnz();
  j["train"] = d.split.train.size();
  j["val"] = d.split.val.size();
  j["test"] = d.split.test.size();
  return j;
}

ordered_json config_block(const ExperimentConfig& cfg) {
  ordered_json j;
  j["echo"] = ordered_json::parse(config_echo(cfg));
  j["hash"] = hash_hex(config_hash(cfg));
  return j;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace

std::vector<SeedRun> run_seeds(const ExperimentConfig& cfg, const DatasetSource& data_for,
                               std::size_t threads) {
  std::vector<SeedRun> runs(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), threads, [&](std::size_t i) {
    const auto data = data_for(cfg.seeds[i]);
    const auto g = dataset_graph(*data, cfg.kappa_sets.front());
    runs[i] = train_one(cfg, *data, g, cfg.seeds[i]);
  });
  return runs;
}

std::vector<SweepRow> sweep_snr(const ExperimentConfig& cfg, std::size_t threads) {
  const std::size_t n_seeds = cfg.seeds.size();
  const std::size_t n_cells = cfg.snr.size() * cfg.kappa_sets.size();
  std::vector<double> acc(n_cells * n_seeds);
  // Citation data is seed independent and costly to parse, so it loads once.
  std::shared_ptr<const Dataset> fixed;
  if (cfg.dataset == DatasetKind::citation) {
    fixed = std::make_shared<const Dataset>(load_dataset(cfg, 0));
  }

  parallel_for(n_cells * n_seeds, threads, [&](std::size_t task) {
    const std::size_t cell = task / n_seeds, s = task % n_seeds;
    const double snr = cfg.snr[cell / cfg.kappa_sets.size()];
    const auto& kappas = cfg.kappa_sets[cell % cfg.kappa_sets.size()];
    const std::uint64_t seed = cfg.seeds[s];
    Dataset data = fixed ? *fixed : load_dataset(cfg, seed);
    data.graph.reset();
    MultiRelationalGraph g = knn_graph(data.x, kappas);
    const PerturbationSpec spec{cfg.target, snr, seed};
    Rng noise = Rng(seed).split(2);
    if (cfg.target == PerturbTarget::features) {
      data.x = perturb_features(data.x, spec, noise);
    } else {
      g = perturb_topology(g, spec, noise);
    }
    acc[task] = train_one(cfg, data, g, seed).test_acc;
  });

  std::vector<SweepRow> rows;
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    SweepRow r;
    r.snr = cfg.snr[cell / cfg.kappa_sets.size()];
    r.kappas = cfg.kappa_sets[cell % cfg.kappa_sets.size()];
    r.per_seed.assign(acc.begin() + static_cast<std::ptrdiff_t>(cell * n_seeds),
                      acc.begin() + static_cast<std::ptrdiff_t>((cell + 1) * n_seeds));
    r.acc = mean_std(r.per_seed);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "snr,kappa_set,mean_acc,std_acc,seeds\n";
  for (const auto& r : rows) {
    os << r.snr << ',' << kappa_label(r.kappas) << ',' << r.acc.mean << ',' << r.acc.std << ','
       << r.per_seed.size() << '\n';
  }
  return os.str();
}

namespace {

struct Instance {
  DenseTensor x, y;
  std::vector<std::size_t> ids;
  MultiRelationalGraph g;
  ModelParams params;
  RegWeights rw;
  ModelOptions options;
  SmoothnessMode smoothness = SmoothnessMode::laplacian;
};

Instance random_instance(std::size_t index, Rng rng) {
  Instance in;
  const std::size_t n = 4 + rng.below(7);
  const std::size_t rel = 1 + rng.below(3);
  const std::size_t layers = 1 + rng.below(3);
  const std::size_t f = 2 + rng.below(5);
  const std::size_t k = 2 + rng.below(2);

  std::vector<SparseMatrix> slices;
  for (std::size_t i = 0; i < rel; ++i) {
    std::vector<Triplet> t;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        if (rng.uniform() < 0.35) t.push_back({r, c, 0.2 + 0.8 * rng.uniform()});
      }
    }
    slices.push_back(SparseMatrix::from_triplets(n, n, std::move(t)));
  }
  in.g = MultiRelationalGraph(n, std::move(slices));

  in.x = DenseTensor({n, f});
  for (double& v : in.x.values()) v = rng.uniform() < 0.3 ? 0.0 : rng.normal();
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = rng.below(k);
  in.y = one_hot(labels, k);
  for (std::size_t r = 0; r < n; ++r) {
    if (rng.uniform() < 0.6) in.ids.push_back(r);
  }
  if (in.ids.empty()) in.ids.push_back(0);

  in.options.sharing = index % 4 == 1 ? WeightSharing::per_node : WeightSharing::shared;
  in.options.mixing = index % 4 == 2 ? MixingIndex::printed : MixingIndex::cross;
  in.options.skip = index % 2 == 1 ? SkipFeed::direct : SkipFeed::diffused;
  in.smoothness = index % 3 == 2 ? SmoothnessMode::raw_s : SmoothnessMode::laplacian;
  in.rw = {0.1 * rng.uniform(), 0.01 * rng.uniform(), 0.01 * rng.uniform()};

  ModelShape shape;
  shape.num_nodes = n;
  shape.features = f;
  for (std::size_t l = 1; l < layers; ++l) shape.hidden.push_back(2 + rng.below(3));
  shape.classes = k;
  shape.relations = rel;
  shape.sharing = in.options.sharing;
  in.params = init_params(shape, rng);
  for (auto* group : {&in.params.layers, &in.params.input_feeds}) {
    for (auto& lp : *group) {
      for (double& v : lp.r_mix.values()) v = 2.0 * rng.uniform() - 1.0;
    }
  }
  for (double& v : in.params.output.relation_weights.values()) v = 0.5 + rng.uniform();
  for (double& v : in.params.output.bias.values()) v = 0.1 * rng.normal();
  return in;
}

}  // namespace

GradcheckSuiteResult gradcheck_suite(std::size_t instances, double eps, std::uint64_t seed,
                                     std::size_t sample) {
  GradcheckSuiteResult res;
  const Rng root(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    const Instance in = random_instance(i, root.split(2 * i));
    const Objective obj(in.x, in.y, in.ids, in.g, in.params, in.rw, in.options, in.smoothness);
    Rng pick = root.split(2 * i + 1);
    const std::size_t count = sample == 0 ? in.params.parameter_count() : sample;
    res.instances.push_back(finite_diff_check(obj, in.params, eps, count, pick));
    const auto& r = res.instances.back();
    res.max_rel_error = std::max(res.max_rel_error, r.max_rel_error);
    res.checked += r.checked;
    res.excluded += r.excluded;
  }
  return res;
}

std::string GradcheckSuiteResult::to_json() const {
  ordered_json j;
  j["max_rel_error"] = max_rel_error;
  j["checked"] = checked;
  j["excluded"] = excluded;
  auto& arr = j["instances"] = ordered_json::array();
  for (const auto& r : instances) arr.push_back(ordered_json::parse(r.to_json()));
  return j.dump(2) + "\n";
}

int cmd_train(const CommandArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto start = Clock::now();
    const ExperimentConfig cfg = resolve_config(args);
    if (args.out.empty()) throw ConfigError("--out is required");
    const fs::path dir = args.out;
    ensure_dir(dir);

    std::shared_ptr<const Dataset> fixed;
    if (cfg.dataset == DatasetKind::citation) {
      fixed = std::make_shared<const Dataset>(load_dataset(cfg, 0));
    }
    const DatasetSource source = [&](std::uint64_t seed) {
      return fixed ? fixed : std::make_shared<const Dataset>(load_dataset(cfg, seed));
    };
    const auto runs = run_seeds(cfg, source, args.threads);

    const auto first = source(cfg.seeds.front());
    const std::uint64_t hash = config_hash(cfg);
    ordered_json report;
    report["config"] = config_block(cfg);
    report["dataset"] = dataset_summary(cfg, *first, dataset_graph(*first, cfg.kappa_sets.front()));
    auto& seeds = report["runs"] = ordered_json::array();
    ordered_json meta;
    meta["runs"] = ordered_json::array();
    std::vector<double> accs;
    for (const auto& r : runs) {
      const std::string tag = "seed" + std::to_string(r.seed);
      const std::string hist = "history_" + tag + ".csv";
      const std::string ckpt = "checkpoint_" + tag + ".json";
      write_file(dir / hist, r.result.history.to_csv());
      save_checkpoint(dir / ckpt, r.result.params, hash);
      seeds.push_back({{"seed", r.seed},
                       {"test_acc", r.test_acc},
                       {"best_epoch", r.best_epoch},
                       {"epochs", r.epochs},
                       {"best_val_loss", r.result.history.best_val_loss},
                       {"history", hist},
                       {"checkpoint", ckpt}});
      meta["runs"].push_back({{"seed", r.seed}, {"wall_seconds", r.wall_seconds}});
      accs.push_back(r.test_acc);
    }
    const MeanStd ms = mean_std(accs);
    report["test_acc"] = {{"mean", ms.mean}, {"std", ms.std}, {"seeds", accs.size()}};
    write_file(dir / "report.json", report.dump(2) + "\n");
    meta["wall_seconds"] = seconds_since(start);
    meta["threads"] = args.threads;
    write_file(dir / "metadata.json", meta.dump(2) + "\n");

    out << "test accuracy " << ms.mean << " +- " << ms.std << " over " << accs.size()
        << " seeds\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_gradcheck(const CommandArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto start = Clock::now();
    const ExperimentConfig cfg = resolve_config(args);
    const auto res =
        gradcheck_suite(cfg.gradcheck_instances, cfg.gradcheck_eps, cfg.gradcheck_seed,
                        cfg.gradcheck_sample);
    if (!args.out.empty()) {
      const fs::path dir = args.out;
      ensure_dir(dir);
      write_file(dir / "gradcheck.json", res.to_json());
      ordered_json meta;
      meta["wall_seconds"] = seconds_since(start);
      write_file(dir / "metadata.json", meta.dump(2) + "\n");
    }
    out << "max relative error " << res.max_rel_error << " over " << res.checked
        << " coordinates (" << res.excluded << " excluded) in " << res.instances.size()
        << " instances, eps " << cfg.gradcheck_eps << '\n';
    return res.max_rel_error <= 1e-5 ? static_cast<int>(kExitOk)
                                     : static_cast<int>(kExitFailure);
  });
}

int cmd_sweep_snr(const CommandArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto start = Clock::now();
    const ExperimentConfig cfg = resolve_config(args);
    if (args.out.empty()) throw ConfigError("--out is required");
    const fs::path dir = args.out;
    ensure_dir(dir);
    const auto rows = sweep_snr(cfg, args.threads);
    const std::string name = "sweep_" + std::string(to_string(cfg.target));
    write_file(dir / (name + ".csv"), sweep_csv(rows));

    ordered_json report;
    report["config"] = config_block(cfg);
    auto& cells = report["cells"] = ordered_json::array();
    for (const auto& r : rows) {
      cells.push_back({{"snr", r.snr},
                       {"kappa_set", r.kappas},
                       {"mean_acc", r.acc.mean},
                       {"std_acc", r.acc.std},
                       {"per_seed", r.per_seed}});
    }
    write_file(dir / (name + ".json"), report.dump(2) + "\n");
    ordered_json meta;
    meta["wall_seconds"] = seconds_since(start);
    meta["threads"] = args.threads;
    write_file(dir / "metadata.json", meta.dump(2) + "\n");
    out << sweep_csv(rows);
    return static_cast<int>(kExitOk);
  });
}

int cmd_build_graph(const CommandArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = resolve_config(args);
    if (args.out.empty()) throw ConfigError("--out is required");
    const Dataset data = load_dataset(cfg, cfg.train.seed);
    std::vector<std::size_t> kappas;
    for (const auto& set : cfg.kappa_sets) kappas.insert(kappas.end(), set.begin(), set.end());
    std::vector<SparseMatrix> graphs;
    for (std::size_t k : kappas) graphs.push_back(build_knn_graph(data.x, k));
    const fs::path dir = args.out;
    ensure_dir(dir);
    for (std::size_t i = 0; i < kappas.size(); ++i) {
      const fs::path path = dir / ("edges_knn" + std::to_string(kappas[i]) + ".csv");
      write_edge_list(path, graphs[i]);
      out << path.string() << ": " << graphs[i].nnz() << " edges over " << data.num_nodes()
          << " nodes\n";
    }
    return static_cast<int>(kExitOk);
  });
}

}  // namespace grnn

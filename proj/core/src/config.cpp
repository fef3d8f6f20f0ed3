#include "grnn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "grnn/errors.hpp"
#include "json.hpp"

namespace grnn {

using nlohmann::json;

namespace {

template <typename E>
struct EnumName {
  E value;
  std::string_view name;
};

constexpr EnumName<Normalization> kNorms[] = {{Normalization::none, "none"},
                                              {Normalization::sym_selfloop, "sym_selfloop"},
                                              {Normalization::row, "row"}};
constexpr EnumName<SmoothnessMode> kSmooth[] = {{SmoothnessMode::laplacian, "laplacian"},
                                                {SmoothnessMode::raw_s, "raw_s"}};
constexpr EnumName<WeightSharing> kSharing[] = {{WeightSharing::shared, "shared"},
                                                {WeightSharing::per_node, "per_node"}};
constexpr EnumName<MixingIndex> kMixing[] = {{MixingIndex::cross, "cross"},
                                             {MixingIndex::printed, "printed"}};
constexpr EnumName<SkipFeed> kSkip[] = {{SkipFeed::diffused, "diffused"},
                                        {SkipFeed::direct, "direct"}};
constexpr EnumName<DatasetKind> kDatasets[] = {{DatasetKind::synthetic, "synthetic"},
                                               {DatasetKind::ionosphere, "ionosphere"},
                                               {DatasetKind::citation, "citation"}};
constexpr EnumName<PerturbTarget> kTargets[] = {{PerturbTarget::features, "features"},
                                                {PerturbTarget::topology, "topology"}};

template <typename E, std::size_t N>
std::string_view name_of(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  return "?";
}

template <typename E, std::size_t N>
E parse_enum(const EnumName<E> (&table)[N], const json& j, const std::string& key) {
  if (!j.is_string()) throw ConfigError("'" + key + "' must be a string");
  const auto s = j.get<std::string>();
  for (const auto& e : table) {
    if (e.name == s) return e.value;
  }
  std::string allowed;
  for (const auto& e : table) allowed += (allowed.empty() ? "" : ", ") + std::string(e.name);
  throw ConfigError("'" + key + "' must be one of " + allowed + ", got '" + s + "'");
}

double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("'" + key + "' must be a number");
  return j.get<double>();
}

std::uint64_t get_uint(const json& j, const std::string& key) {
  if (!j.is_number_unsigned()) throw ConfigError("'" + key + "' must be a non-negative integer");
  return j.get<std::uint64_t>();
}

std::vector<std::size_t> get_uint_list(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("'" + key + "' must be an array of integers");
  std::vector<std::size_t> out;
  for (const auto& v : j) out.push_back(get_uint(v, key));
  return out;
}

}  // namespace

std::string_view to_string(Normalization n) { return name_of(kNorms, n); }
std::string_view to_string(SmoothnessMode m) { return name_of(kSmooth, m); }
std::string_view to_string(DatasetKind k) { return name_of(kDatasets, k); }
std::string_view to_string(PerturbTarget t) { return name_of(kTargets, t); }

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  ExperimentConfig cfg;
  json doc = json::object();
  if (text.find_first_not_of(" \t\r\n") != std::string_view::npos) {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(source + ": " + e.what());
    }
  }
  if (!doc.is_object()) throw ConfigError(source + ": top level must be an object");

  bool norm_set = false;
  bool seeds_set = false;
  json seeds_value;
  TrainConfig& t = cfg.train;
  const std::map<std::string, std::function<void(const json&, const std::string&)>> handlers = {
      {"lr", [&](const json& v, const std::string& k) { t.lr = get_number(v, k); }},
      {"max_epochs", [&](const json& v, const std::string& k) { t.max_epochs = get_uint(v, k); }},
      {"patience", [&](const json& v, const std::string& k) { t.patience = get_uint(v, k); }},
      {"mu1", [&](const json& v, const std::string& k) { t.rw.mu1 = get_number(v, k); }},
      {"mu2", [&](const json& v, const std::string& k) { t.rw.mu2 = get_number(v, k); }},
      {"lambda", [&](const json& v, const std::string& k) { t.rw.lambda = get_number(v, k); }},
      {"keep_prob", [&](const json& v, const std::string& k) { t.keep_prob = get_number(v, k); }},
      {"seed", [&](const json& v, const std::string& k) { t.seed = get_uint(v, k); }},
      {"hidden", [&](const json& v, const std::string& k) { t.hidden = get_uint_list(v, k); }},
      {"normalization",
       [&](const json& v, const std::string& k) {
         t.normalization = parse_enum(kNorms, v, k);
         norm_set = true;
       }},
      {"smoothness",
       [&](const json& v, const std::string& k) { t.smoothness = parse_enum(kSmooth, v, k); }},
      {"sharing",
       [&](const json& v, const std::string& k) { t.sharing = parse_enum(kSharing, v, k); }},
      {"mixing", [&](const json& v, const std::string& k) { t.mixing = parse_enum(kMixing, v, k); }},
      {"skip", [&](const json& v, const std::string& k) { t.skip = parse_enum(kSkip, v, k); }},
      {"dataset",
       [&](const json& v, const std::string& k) { cfg.dataset = parse_enum(kDatasets, v, k); }},
      {"data",
       [&](const json& v, const std::string& k) {
         if (!v.is_string()) throw ConfigError("'" + k + "' must be a string");
         cfg.data = v.get<std::string>();
       }},
      {"seeds",
       [&](const json& v, const std::string&) {
         seeds_value = v;
         seeds_set = true;
       }},
      {"kappa_sets",
       [&](const json& v, const std::string& k) {
         if (!v.is_array() || v.empty()) throw ConfigError("'" + k + "' must be a list of lists");
         cfg.kappa_sets.clear();
         for (const auto& s : v) cfg.kappa_sets.push_back(get_uint_list(s, k));
       }},
      {"snr",
       [&](const json& v, const std::string& k) {
         if (!v.is_array() || v.empty()) throw ConfigError("'" + k + "' must be a list of numbers");
         cfg.snr.clear();
         for (const auto& s : v) cfg.snr.push_back(get_number(s, k));
       }},
      {"target",
       [&](const json& v, const std::string& k) { cfg.target = parse_enum(kTargets, v, k); }},
      {"extra_knn", [&](const json& v, const std::string& k) { cfg.extra_knn = get_uint(v, k); }},
      {"feature_norm",
       [&](const json& v, const std::string& k) {
         if (!v.is_string() || (v != "none" && v != "row")) {
           throw ConfigError("'" + k + "' must be \"none\" or \"row\"");
         }
         cfg.row_normalize_features = v == "row";
       }},
      {"n", [&](const json& v, const std::string& k) { cfg.synthetic.n = get_uint(v, k); }},
      {"f", [&](const json& v, const std::string& k) { cfg.synthetic.f = get_uint(v, k); }},
      {"variance",
       [&](const json& v, const std::string& k) { cfg.synthetic.variance = get_number(v, k); }},
      {"labeled", [&](const json& v, const std::string& k) { cfg.labeled = get_uint(v, k); }},
      {"gradcheck_eps",
       [&](const json& v, const std::string& k) { cfg.gradcheck_eps = get_number(v, k); }},
      {"gradcheck_instances",
       [&](const json& v, const std::string& k) { cfg.gradcheck_instances = get_uint(v, k); }},
      {"gradcheck_sample",
       [&](const json& v, const std::string& k) { cfg.gradcheck_sample = get_uint(v, k); }},
      {"gradcheck_seed",
       [&](const json& v, const std::string& k) { cfg.gradcheck_seed = get_uint(v, k); }},
  };

  for (const auto& [key, value] : doc.items()) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError(source + ": unknown key '" + key + "'");
    try {
      it->second(value, key);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ": " + e.what());
    }
  }

  if (!norm_set) {
    t.normalization =
        cfg.dataset == DatasetKind::citation ? Normalization::sym_selfloop : Normalization::none;
  }
  if (seeds_set) {
    if (seeds_value.is_number_unsigned()) {
      const auto count = seeds_value.get<std::uint64_t>();
      for (std::uint64_t s = 0; s < count; ++s) cfg.seeds.push_back(t.seed + s);
    } else if (seeds_value.is_array()) {
      for (const auto& s : seeds_value) cfg.seeds.push_back(get_uint(s, "seeds"));
    } else {
      throw ConfigError(source + ": 'seeds' must be a count or a list of integers");
    }
    if (cfg.seeds.empty()) throw ConfigError(source + ": 'seeds' is empty");
  } else {
    for (std::uint64_t s = 0; s < 10; ++s) cfg.seeds.push_back(t.seed + s);
  }
  if (cfg.labeled == 0) {
    cfg.labeled = cfg.dataset == DatasetKind::ionosphere ? 50 : cfg.synthetic.labeled;
  }
  cfg.synthetic.labeled = cfg.labeled;
  for (double s : cfg.snr) {
    if (!(s > 0.0)) throw ConfigError(source + ": snr values must be positive");
  }
  for (const auto& set : cfg.kappa_sets) {
    if (set.empty()) throw ConfigError(source + ": kappa sets must be non-empty");
    for (auto k : set) {
      if (k == 0) throw ConfigError(source + ": kappa must be positive");
    }
  }
  try {
    t.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string config_echo(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json j;  // std::map ordering gives sorted keys
  j["lr"] = t.lr;
  j["max_epochs"] = t.max_epochs;
  j["patience"] = t.patience;
  j["mu1"] = t.rw.mu1;
  j["mu2"] = t.rw.mu2;
  j["lambda"] = t.rw.lambda;
  j["keep_prob"] = t.keep_prob;
  j["seed"] = t.seed;
  j["hidden"] = t.hidden;
  j["normalization"] = to_string(t.normalization);
  j["smoothness"] = to_string(t.smoothness);
  j["sharing"] = name_of(kSharing, t.sharing);
  j["mixing"] = name_of(kMixing, t.mixing);
  j["skip"] = name_of(kSkip, t.skip);
  j["dataset"] = to_string(cfg.dataset);
  j["data"] = cfg.data;
  j["seeds"] = cfg.seeds;
  j["kappa_sets"] = cfg.kappa_sets;
  j["snr"] = cfg.snr;
  j["target"] = to_string(cfg.target);
  j["extra_knn"] = cfg.extra_knn;
  j["feature_norm"] = cfg.row_normalize_features ? "row" : "none";
  j["n"] = cfg.synthetic.n;
  j["f"] = cfg.synthetic.f;
  j["variance"] = cfg.synthetic.variance;
  j["labeled"] = cfg.labeled;
  j["gradcheck_eps"] = cfg.gradcheck_eps;
  j["gradcheck_instances"] = cfg.gradcheck_instances;
  j["gradcheck_sample"] = cfg.gradcheck_sample;
  j["gradcheck_seed"] = cfg.gradcheck_seed;
  return j.dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config_echo(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

template <typename T>
T parse_token(std::string_view tok, std::string_view what) {
  while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
  while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
  T v{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || tok.empty()) {
    throw ConfigError("bad " + std::string(what) + " '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view text, std::uint64_t base) {
  std::vector<std::uint64_t> out;
  if (text.find(',') == std::string_view::npos) {
    const auto count = parse_token<std::uint64_t>(text, "seed count");
    if (count == 0) throw ConfigError("seed count must be positive");
    for (std::uint64_t s = 0; s < count; ++s) out.push_back(base + s);
    return out;
  }
  for (auto tok : split_on(text, ',')) out.push_back(parse_token<std::uint64_t>(tok, "seed"));
  return out;
}

std::vector<std::vector<std::size_t>> parse_kappa_sets(std::string_view text) {
  std::vector<std::vector<std::size_t>> out;
  for (auto set : split_on(text, ';')) {
    std::vector<std::size_t> ks;
    for (auto tok : split_on(set, ',')) {
      const auto k = parse_token<std::size_t>(tok, "kappa");
      if (k == 0) throw ConfigError("kappa must be positive");
      ks.push_back(k);
    }
    out.push_back(std::move(ks));
  }
  return out;
}

std::vector<double> parse_snr_list(std::string_view text) {
  std::vector<double> out;
  for (auto tok : split_on(text, ',')) {
    const auto v = parse_token<double>(tok, "snr");
    if (!(v > 0.0)) throw ConfigError("snr values must be positive");
    out.push_back(v);
  }
  return out;
}

}  // namespace grnn

#include "grnn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "grnn/errors.hpp"
#include "json.hpp"

namespace grnn {

using nlohmann::ordered_json;

namespace {

/// Rebuilds the vector layout from tensor names of the form
/// `layers.<l>.w_mix`, `input_feeds.<l>.r_mix`, `output.bias`.
void place(ModelParams& p, const std::string& name, DenseTensor t) {
  auto slot = [&](std::vector<LayerParams>& v, std::string_view rest) {
    const auto dot = rest.find('.');
    if (dot == std::string_view::npos) throw FormatError("bad tensor name " + name);
    std::size_t l = 0;
    try {
      l = std::stoul(std::string(rest.substr(0, dot)));
    } catch (const std::exception&) {
      throw FormatError("bad tensor name " + name);
    }
    if (v.size() <= l) v.resize(l + 1);
    const auto field = rest.substr(dot + 1);
    if (field == "w_mix") {
      v[l].w_mix = std::move(t);
    } else if (field == "r_mix") {
      v[l].r_mix = std::move(t);
    } else {
      throw FormatError("bad tensor name " + name);
    }
  };
  const std::string_view n = name;
  if (n.starts_with("layers.")) {
    slot(p.layers, n.substr(7));
  } else if (n.starts_with("input_feeds.")) {
    slot(p.input_feeds, n.substr(12));
  } else if (n == "output.relation_weights") {
    p.output.relation_weights = std::move(t);
  } else if (n == "output.bias") {
    p.output.bias = std::move(t);
  } else {
    throw FormatError("unknown tensor " + name);
  }
}

}  // namespace

std::string checkpoint_json(const ModelParams& params, std::uint64_t config_hash) {
  ordered_json j;
  j["format"] = "grnn-checkpoint-1";
  j["config_hash"] = config_hash;
  auto& tensors = j["tensors"] = ordered_json::array();
  for_each_tensor(params, [&](std::string_view name, const DenseTensor& t) {
    ordered_json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["values"] = std::vector<double>(t.values().begin(), t.values().end());
    tensors.push_back(std::move(e));
  });
  return j.dump() + "\n";
}

ModelParams parse_checkpoint(std::string_view text, std::uint64_t* config_hash) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "grnn-checkpoint-1" || !j.contains("tensors")) {
    throw FormatError("checkpoint: unrecognized format");
  }
  ModelParams p;
  try {
    for (const auto& e : j.at("tensors")) {
      DenseTensor t(e.at("shape").get<Shape>(), e.at("values").get<std::vector<double>>());
      place(p, e.at("name").get<std::string>(), std::move(t));
    }
    if (config_hash) *config_hash = j.at("config_hash").get<std::uint64_t>();
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (p.layers.empty() || p.layers.size() != p.input_feeds.size()) {
    throw FormatError("checkpoint: layer list incomplete");
  }
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << checkpoint_json(params, config_hash);
  if (!out) throw IoError("write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path, std::uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), config_hash);
}

}  // namespace grnn

#include "grnn/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>

#include "grnn/errors.hpp"
#include "json.hpp"

namespace grnn {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Iterates the lines of a text buffer, stripping a trailing CR.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const std::size_t end = std::min(text_.find('\n', pos_), text_.size());
    line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++line_no_;
    return true;
  }
  [[nodiscard]] std::size_t line_no() const { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

template <typename T>
bool parse_field(std::string_view field, T& out) {
  const char* first = field.data();
  const char* last = first + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string where(const fs::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::size_t> read_ids(const nlohmann::json& j, const char* key, const fs::path& path) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw FormatError(path.string() + ": missing array '" + key + "'");
  }
  std::vector<std::size_t> ids;
  for (const auto& v : j[key]) {
    if (!v.is_number_unsigned()) {
      throw FormatError(path.string() + ": '" + key + "' holds a non-integer id");
    }
    ids.push_back(v.get<std::size_t>());
  }
  return ids;
}

}  // namespace

std::vector<std::size_t> Dataset::labels() const {
  const std::size_t n = y.dim(0), k = y.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      if (y(r, c) == 1.0) out[r] = c;
    }
  }
  return out;
}

void Dataset::validate() const {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(0) != y.dim(0)) {
    throw FormatError("features " + shape_string(x.shape()) + " and labels " +
                      shape_string(y.shape()) + " disagree");
  }
  if (x.dim(1) < 1) throw FormatError("dataset needs at least one feature");
  if (!x.all_finite()) throw FormatError("features contain non-finite values");
  if (y.dim(1) < 2) throw FormatError("dataset needs at least two classes");
  for (std::size_t r = 0; r < y.dim(0); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < y.dim(1); ++c) {
      const double v = y(r, c);
      if (v != 0.0 && v != 1.0) throw FormatError("label row " + std::to_string(r) + " not one-hot");
      sum += v;
    }
    if (sum != 1.0) throw FormatError("label row " + std::to_string(r) + " not one-hot");
  }
  split.validate(x.dim(0));
  if (graph && graph->num_nodes() != x.dim(0)) {
    throw FormatError("graph has " + std::to_string(graph->num_nodes()) + " nodes, dataset " +
                      std::to_string(x.dim(0)));
  }
}

DenseTensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  DenseTensor y({labels.size(), classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= classes) throw ParameterError("label exceeds class count");
    y(r, labels[r]) = 1.0;
  }
  return y;
}

LabeledSplit random_split(std::size_t num_nodes, std::size_t labeled, Rng& rng) {
  if (labeled == 0 || labeled >= num_nodes) {
    throw ParameterError("labeled count " + std::to_string(labeled) + " must be in [1, " +
                         std::to_string(num_nodes) + ")");
  }
  std::vector<std::size_t> perm(num_nodes);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = num_nodes - 1; i > 0; --i) {
    std::swap(perm[i], perm[static_cast<std::size_t>(rng.below(i + 1))]);
  }
  const std::size_t rest = num_nodes - labeled;
  const std::size_t n_val = rest / 5;
  LabeledSplit s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(labeled));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(labeled),
               perm.begin() + static_cast<std::ptrdiff_t>(labeled + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(labeled + n_val), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.n == 0 || spec.n % 2 != 0) {
    throw ParameterError("synthetic node count must be positive and even, got " +
                         std::to_string(spec.n));
  }
  if (spec.f == 0 || !(spec.variance >= 0.0)) {
    throw ParameterError("synthetic data needs f >= 1 and a non-negative variance");
  }
  Rng root(seed);
  Rng feat_rng = root.split(0);
  Rng split_rng = root.split(1);
  const double sd = std::sqrt(spec.variance);
  Dataset d;
  d.x = DenseTensor({spec.n, spec.f});
  std::vector<std::size_t> labels(spec.n);
  for (std::size_t r = 0; r < spec.n; ++r) {
    labels[r] = r < spec.n / 2 ? 0 : 1;
    const double mu = static_cast<double>(labels[r]);
    for (std::size_t c = 0; c < spec.f; ++c) d.x(r, c) = mu + sd * feat_rng.normal();
  }
  d.y = one_hot(labels, 2);
  d.split = random_split(spec.n, spec.labeled, split_rng);
  return d;
}

Dataset load_ionosphere(const fs::path& path, std::uint64_t seed, std::size_t labeled) {
  constexpr std::size_t kRows = 351, kCols = 34;
  const std::string text = slurp(path);
  LineReader reader(text);
  std::string_view line;
  std::vector<double> values;
  std::vector<std::size_t> labels;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != kCols + 1) {
      throw FormatError(where(path, reader.line_no()) + ": expected " +
                        std::to_string(kCols + 1) + " fields, found " +
                        std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < kCols; ++c) {
      double v = 0.0;
      if (!parse_field(fields[c], v)) {
        throw FormatError(where(path, reader.line_no()) + ": bad number in column " +
                          std::to_string(c));
      }
      values.push_back(v);
    }
    if (fields[kCols] == "g") {
      labels.push_back(0);
    } else if (fields[kCols] == "b") {
      labels.push_back(1);
    } else {
      throw FormatError(where(path, reader.line_no()) + ": class must be 'g' or 'b'");
    }
  }
  if (labels.size() != kRows) {
    throw FormatError(where(path, reader.line_no() + 1) + ": expected " + std::to_string(kRows) +
                      " rows, found " + std::to_string(labels.size()));
  }
  Dataset d;
  d.x = DenseTensor({kRows, kCols}, std::move(values));
  d.y = one_hot(labels, 2);
  Rng rng = Rng(seed).split(1);
  d.split = random_split(kRows, labeled, rng);
  return d;
}

Dataset load_citation(const fs::path& dir, const CitationOptions& options) {
  const fs::path feat_path = dir / "features.csv";
  const fs::path label_path = dir / "labels.csv";
  const fs::path edge_path = dir / "edges_citation.csv";
  const fs::path split_path = dir / "split.json";
  for (const auto& p : {feat_path, label_path, edge_path, split_path}) {
    if (!fs::exists(p)) throw IoError("missing file " + p.string());
  }

  // Features: node ids must be a permutation of 0..N-1.
  const std::string ftext = slurp(feat_path);
  LineReader fr(ftext);
  std::string_view line;
  if (!fr.next(line)) throw FormatError(feat_path.string() + ": empty file");
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "node_id") {
    throw FormatError(feat_path.string() + ": header must be node_id,f0,...");
  }
  const std::size_t f = header.size() - 1;
  std::vector<std::pair<std::size_t, std::size_t>> order;  // (node id, row in `rows`)
  std::vector<double> rows;
  while (fr.next(line)) {
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != f + 1) {
      throw FormatError(where(feat_path, fr.line_no()) + ": expected " + std::to_string(f + 1) +
                        " fields");
    }
    std::size_t id = 0;
    if (!parse_field(fields[0], id)) throw FormatError(where(feat_path, fr.line_no()) + ": bad id");
    order.emplace_back(id, order.size());
    for (std::size_t c = 1; c <= f; ++c) {
      double v = 0.0;
      if (!parse_field(fields[c], v)) {
        throw FormatError(where(feat_path, fr.line_no()) + ": bad value in column " +
                          std::to_string(c - 1));
      }
      rows.push_back(v);
    }
  }
  const std::size_t n = order.size();
  if (n == 0) throw FormatError(feat_path.string() + ": no rows");
  Dataset d;
  d.x = DenseTensor({n, f});
  std::vector<char> seen(n, 0);
  for (const auto& [id, row] : order) {
    if (id >= n || seen[id]) {
      throw FormatError(feat_path.string() + ": node ids must be 0.." + std::to_string(n - 1) +
                        " without repeats (saw " + std::to_string(id) + ")");
    }
    seen[id] = 1;
    std::copy_n(rows.data() + row * f, f, d.x.data() + id * f);
  }

  const std::string ltext = slurp(label_path);
  LineReader lr(ltext);
  if (!lr.next(line) || line != "node_id,class") {
    throw FormatError(label_path.string() + ": header must be node_id,class");
  }
  std::vector<long long> labels(n, -1);
  while (lr.next(line)) {
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    std::size_t id = 0;
    long long cls = -1;
    if (fields.size() != 2 || !parse_field(fields[0], id) || !parse_field(fields[1], cls)) {
      throw FormatError(where(label_path, lr.line_no()) + ": malformed label row");
    }
    if (id >= n) throw FormatError(where(label_path, lr.line_no()) + ": dangling node id");
    if (cls < 0) throw FormatError(where(label_path, lr.line_no()) + ": negative class");
    if (labels[id] != -1) throw FormatError(where(label_path, lr.line_no()) + ": repeated node");
    labels[id] = cls;
  }
  std::vector<std::size_t> lab(n);
  std::size_t k = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0) throw FormatError(label_path.string() + ": node " + std::to_string(r) +
                                         " has no label");
    lab[r] = static_cast<std::size_t>(labels[r]);
    k = std::max(k, lab[r] + 1);
  }
  d.y = one_hot(lab, std::max<std::size_t>(k, 2));

  nlohmann::json sj;
  try {
    sj = nlohmann::json::parse(slurp(split_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(split_path.string() + ": " + e.what());
  }
  d.split.train = read_ids(sj, "train", split_path);
  d.split.val = read_ids(sj, "val", split_path);
  d.split.test = read_ids(sj, "test", split_path);

  std::vector<SparseMatrix> rel{read_edge_list(edge_path, n)};
  std::vector<std::string> names{"citation"};
  if (options.extra_knn > 0) {
    rel.push_back(build_knn_graph(d.x, options.extra_knn));
    names.push_back("knn" + std::to_string(options.extra_knn));
  }
  d.graph = MultiRelationalGraph(n, std::move(rel), std::move(names));
  d.validate();
  return d;
}

void write_dataset(const Dataset& data, const fs::path& dir) {
  data.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::size_t n = data.num_nodes(), f = data.num_features();

  std::string text = "node_id";
  for (std::size_t c = 0; c < f; ++c) text += ",f" + std::to_string(c);
  text += '\n';
  for (std::size_t r = 0; r < n; ++r) {
    text += std::to_string(r);
    for (std::size_t c = 0; c < f; ++c) {
      text += ',';
      append_double(text, data.x(r, c));
    }
    text += '\n';
  }
  write_text(dir / "features.csv", text);

  text = "node_id,class\n";
  const auto lab = data.labels();
  for (std::size_t r = 0; r < n; ++r) text += std::to_string(r) + "," + std::to_string(lab[r]) + "\n";
  write_text(dir / "labels.csv", text);

  nlohmann::ordered_json sj;
  sj["train"] = data.split.train;
  sj["val"] = data.split.val;
  sj["test"] = data.split.test;
  write_text(dir / "split.json", sj.dump() + "\n");

  if (data.graph) {
    for (std::size_t i = 0; i < data.graph->num_relations(); ++i) {
      const std::string name = i == 0 ? "citation" : data.graph->name(i);
      write_edge_list(dir / ("edges_" + name + ".csv"), data.graph->relation(i));
    }
  } else {
    write_edge_list(dir / "edges_citation.csv", SparseMatrix::from_triplets(n, n, {}));
  }
}

void row_normalize(DenseTensor& x) {
  if (x.rank() != 2) throw ShapeError("row_normalize expects a matrix");
  const std::size_t n = x.dim(0), f = x.dim(1);
  for (std::size_t r = 0; r < n; ++r) {
    double* row = x.data() + r * f;
    double s = 0.0;
    for (std::size_t c = 0; c < f; ++c) s += std::abs(row[c]);
    if (s == 0.0) continue;
    for (std::size_t c = 0; c < f; ++c) row[c] /= s;
  }
}

}  // namespace grnn

#include "snag/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "snag/errors.hpp"

namespace snag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct LineReader {
  explicit LineReader(const fs::path& p) : path(p), in(p) {
    if (!fs::exists(p)) throw InputError("missing file: " + p.string());
    if (!in) throw InputError("cannot open file: " + p.string());
  }
  bool next(std::string& line) {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  }
  fs::path path;
  std::ifstream in;
  std::size_t lineno = 0;
};

std::vector<std::string_view> split_tokens(std::string_view s, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && seps.find(s[i]) != std::string_view::npos) ++i;
    std::size_t j = i;
    while (j < s.size() && seps.find(s[j]) == std::string_view::npos) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  const char* b = tok.data();
  const char* e = b + tok.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<std::pair<Index, Index>> read_edges(const fs::path& p, std::size_t num_nodes) {
  LineReader r(p);
  std::vector<std::pair<Index, Index>> edges;
  std::string line;
  while (r.next(line)) {
    auto t = split_tokens(line, " \t,");
    Index u = 0, v = 0;
    if (t.size() != 2 || !parse_number(t[0], u) || !parse_number(t[1], v)) {
      r.fail("expected two integer node ids");
    }
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= num_nodes || static_cast<std::size_t>(v) >= num_nodes) {
      r.fail("dangling edge (" + std::to_string(u) + "," + std::to_string(v) + "): num_nodes is " +
             std::to_string(num_nodes));
    }
    edges.emplace_back(u, v);
  }
  return edges;
}

Tensor read_features(const fs::path& p, std::size_t expected_rows, std::size_t expected_cols) {
  LineReader r(p);
  std::vector<double> data;
  std::size_t rows = 0;
  std::string line;
  while (r.next(line)) {
    auto t = split_tokens(line, ", \t");
    if (t.size() != expected_cols) {
      r.fail("expected " + std::to_string(expected_cols) + " feature columns, found " + std::to_string(t.size()));
    }
    for (auto tok : t) {
      double v = 0.0;
      if (!parse_number(tok, v)) r.fail("bad decimal '" + std::string(tok) + "'");
      data.push_back(v);
    }
    ++rows;
  }
  if (rows != expected_rows) {
    throw InputError(p.string() + ": expected " + std::to_string(expected_rows) + " feature rows, found " +
                     std::to_string(rows));
  }
  return Tensor::matrix(rows, expected_cols, std::move(data));
}

void read_labels(const fs::path& p, Graph& g) {
  LineReader r(p);
  std::string line;
  std::size_t rows = 0;
  while (r.next(line)) {
    if (g.multilabel) {
      auto t = split_tokens(line, ", \t");
      if (t.size() != g.num_classes) {
        r.fail("expected " + std::to_string(g.num_classes) + " label flags, found " + std::to_string(t.size()));
      }
      for (auto tok : t) {
        int v = 0;
        if (!parse_number(tok, v) || (v != 0 && v != 1)) r.fail("label flags must be 0 or 1");
        g.label_matrix.push_back(v);
      }
    } else {
      auto t = split_tokens(line, " \t");
      int y = 0;
      if (t.size() != 1 || !parse_number(t[0], y)) r.fail("expected one integer label");
      if (y < -1 || y >= static_cast<int>(g.num_classes)) {
        r.fail("label " + std::to_string(y) + " outside [0," + std::to_string(g.num_classes) + ")");
      }
      g.labels.push_back(y);
    }
    ++rows;
  }
  if (rows != g.num_nodes) {
    throw InputError(p.string() + ": expected " + std::to_string(g.num_nodes) + " label rows, found " +
                     std::to_string(rows));
  }
}

void read_splits(const fs::path& p, Graph& g) {
  LineReader r(p);
  g.train_mask.assign(g.num_nodes, 0);
  g.val_mask.assign(g.num_nodes, 0);
  g.test_mask.assign(g.num_nodes, 0);
  std::string line;
  std::size_t v = 0;
  while (r.next(line)) {
    if (v >= g.num_nodes) r.fail("more split rows than nodes");
    auto t = split_tokens(line, " \t");
    if (t.size() != 1) r.fail("expected one split tag");
    if (t[0] == "train") g.train_mask[v] = 1;
    else if (t[0] == "val") g.val_mask[v] = 1;
    else if (t[0] == "test") g.test_mask[v] = 1;
    else if (t[0] != "none") r.fail("unknown split tag '" + std::string(t[0]) + "'");
    ++v;
  }
  if (v != g.num_nodes) {
    throw InputError(p.string() + ": expected " + std::to_string(g.num_nodes) + " split rows, found " +
                     std::to_string(v));
  }
}

std::size_t count_edges(const Graph& g, bool undirected) {
  if (!undirected) return g.num_entries();
  std::size_t loops = 0;
  for (std::size_t v = 0; v < g.num_nodes; ++v) loops += g.has_edge(v, v) ? 1 : 0;
  return (g.num_entries() - loops) / 2 + loops;
}

Graph load_graph(const fs::path& dir, const DatasetManifest& m, const GraphFiles& f) {
  Graph g;
  g.num_nodes = f.num_nodes;
  g.num_classes = m.num_classes;
  g.multilabel = m.multilabel;
  const auto edges = read_edges(dir / f.edges, f.num_nodes);
  std::tie(g.offsets, g.targets) = build_csr(f.num_nodes, edges, m.undirected);
  g.features = read_features(dir / f.features, f.num_nodes, m.num_features);
  read_labels(dir / f.labels, g);
  if (!f.splits.empty()) read_splits(dir / f.splits, g);
  try {
    validate(g);
  } catch (const std::invalid_argument& e) {
    throw InputError(dir.string() + ": " + e.what());
  }
  return g;
}

template <typename T>
T get_required(const json& j, const char* key, const fs::path& where) {
  if (!j.contains(key)) throw InputError(where.string() + ": manifest is missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(where.string() + ": bad value for \"" + key + "\": " + e.what());
  }
}

std::string role_of(const Graph& g) {
  auto all = [&](const std::vector<std::uint8_t>& m) {
    return !m.empty() && std::all_of(m.begin(), m.end(), [](auto b) { return b != 0; });
  };
  if (all(g.train_mask)) return "train";
  if (all(g.val_mask)) return "val";
  if (all(g.test_mask)) return "test";
  throw std::invalid_argument("inductive graph must have exactly one fully-set mask");
}

void write_graph(const Graph& g, const fs::path& dir, bool undirected, bool with_splits) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "edges.txt");
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      for (Index u : g.neighbors(v)) {
        if (undirected && u < static_cast<Index>(v)) continue;
        out << v << ' ' << u << '\n';
      }
    }
  }
  {
    std::ofstream out(dir / "features.csv");
    const std::size_t d = g.feature_dim();
    auto x = g.features.data();
    std::string row;
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      row.clear();
      for (std::size_t j = 0; j < d; ++j) {
        if (j) row += ',';
        row += format_double(x[v * d + j]);
      }
      out << row << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.txt");
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      if (g.multilabel) {
        for (std::size_t c = 0; c < g.num_classes; ++c) {
          out << (c ? "," : "") << static_cast<int>(g.label_matrix[v * g.num_classes + c]);
        }
        out << '\n';
      } else {
        out << g.labels[v] << '\n';
      }
    }
  }
  if (with_splits) {
    std::ofstream out(dir / "splits.txt");
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      out << (g.train_mask[v] ? "train" : g.val_mask[v] ? "val" : g.test_mask[v] ? "test" : "none") << '\n';
    }
  }
}

bool is_symmetric(const Graph& g) {
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    for (Index u : g.neighbors(v)) {
      if (!g.has_edge(static_cast<std::size_t>(u), v)) return false;
    }
  }
  return true;
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  if (!fs::exists(file)) throw InputError("missing file: " + file.string());
  json j;
  try {
    std::ifstream in(file);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(file.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.name = get_required<std::string>(j, "name", file);
  try {
    m.task = task_from_string(get_required<std::string>(j, "task", file));
  } catch (const std::invalid_argument& e) {
    throw InputError(file.string() + ": " + e.what());
  }
  m.undirected = j.value("undirected", true);
  m.multilabel = j.value("multilabel", false);
  m.num_features = get_required<std::size_t>(j, "num_features", file);
  m.num_classes = get_required<std::size_t>(j, "num_classes", file);
  if (j.contains("num_edges")) m.num_edges = j.at("num_edges").get<std::size_t>();
  if (m.num_features == 0 || m.num_classes == 0) throw InputError(file.string() + ": counts must be positive");

  if (m.task == TaskKind::kTransductive) {
    GraphFiles f;
    f.num_nodes = get_required<std::size_t>(j, "num_nodes", file);
    f.edges = j.value("edges", "edges.txt");
    f.features = j.value("features", "features.csv");
    f.labels = j.value("labels", "labels.txt");
    f.splits = j.value("splits", "");
    m.graphs.push_back(f);
  } else {
    if (!j.contains("graphs") || !j["graphs"].is_array() || j["graphs"].empty()) {
      throw InputError(file.string() + ": inductive manifest needs a non-empty \"graphs\" array");
    }
    for (const auto& gj : j["graphs"]) {
      GraphFiles f;
      f.role = get_required<std::string>(gj, "role", file);
      if (f.role != "train" && f.role != "val" && f.role != "test") {
        throw InputError(file.string() + ": graph role must be train, val or test, got '" + f.role + "'");
      }
      f.num_nodes = get_required<std::size_t>(gj, "num_nodes", file);
      f.edges = get_required<std::string>(gj, "edges", file);
      f.features = get_required<std::string>(gj, "features", file);
      f.labels = get_required<std::string>(gj, "labels", file);
      m.graphs.push_back(f);
    }
  }
  for (const auto& f : m.graphs) {
    if (f.num_nodes == 0) throw InputError(file.string() + ": num_nodes must be positive");
  }
  return m;
}

Dataset load_dataset(const fs::path& dir_or_manifest, const LoadOptions& options) {
  const DatasetManifest m = read_manifest(dir_or_manifest);
  const fs::path dir = fs::is_directory(dir_or_manifest) ? dir_or_manifest : dir_or_manifest.parent_path();

  Dataset ds;
  ds.name = m.name;
  ds.task = m.task;
  ds.multilabel = m.multilabel;
  ds.num_features = m.num_features;
  ds.num_classes = m.num_classes;
  for (const auto& f : m.graphs) {
    Graph g = load_graph(dir, m, f);
    if (m.task == TaskKind::kInductive) {
      g.train_mask.assign(g.num_nodes, f.role == "train");
      g.val_mask.assign(g.num_nodes, f.role == "val");
      g.test_mask.assign(g.num_nodes, f.role == "test");
    } else {
      if (m.num_edges && count_edges(g, m.undirected) != *m.num_edges) {
        throw InputError(dir.string() + ": manifest declares " + std::to_string(*m.num_edges) +
                         " edges, loaded " + std::to_string(count_edges(g, m.undirected)));
      }
      if (g.train_mask.empty()) g = make_splits(g, options.fractions, options.split_seed);
    }
    if (options.row_normalize) row_normalize(g);
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

DatasetManifest save_dataset(const Dataset& ds, const fs::path& dir) {
  if (ds.graphs.empty()) throw std::invalid_argument("save_dataset: dataset has no graphs");
  fs::create_directories(dir);
  bool undirected = true;
  for (const auto& g : ds.graphs) undirected = undirected && is_symmetric(g);

  DatasetManifest m;
  m.name = ds.name;
  m.task = ds.task;
  m.undirected = undirected;
  m.multilabel = ds.multilabel;
  m.num_features = ds.num_features;
  m.num_classes = ds.num_classes;

  json j;
  j["name"] = ds.name;
  j["task"] = std::string(to_string(ds.task));
  j["undirected"] = undirected;
  j["multilabel"] = ds.multilabel;
  j["num_features"] = ds.num_features;
  j["num_classes"] = ds.num_classes;
  if (ds.task == TaskKind::kTransductive) {
    const Graph& g = ds.graphs.front();
    const bool with_splits = !g.train_mask.empty();
    write_graph(g, dir, undirected, with_splits);
    GraphFiles f{"", g.num_nodes, "edges.txt", "features.csv", "labels.txt", with_splits ? "splits.txt" : ""};
    m.graphs.push_back(f);
    m.num_edges = count_edges(g, undirected);
    j["num_nodes"] = g.num_nodes;
    j["num_edges"] = *m.num_edges;
    j["edges"] = f.edges;
    j["features"] = f.features;
    j["labels"] = f.labels;
    if (with_splits) j["splits"] = f.splits;
  } else {
    j["graphs"] = json::array();
    for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
      const Graph& g = ds.graphs[i];
      const std::string sub = "graph_" + std::to_string(i);
      write_graph(g, dir / sub, undirected, false);
      GraphFiles f{role_of(g), g.num_nodes, sub + "/edges.txt", sub + "/features.csv", sub + "/labels.txt", ""};
      m.graphs.push_back(f);
      j["graphs"].push_back({{"role", f.role},
                             {"num_nodes", f.num_nodes},
                             {"edges", f.edges},
                             {"features", f.features},
                             {"labels", f.labels}});
    }
  }
  std::ofstream(dir / "manifest.json") << j.dump(2) << '\n';
  return m;
}

Dataset convert_edgelist(const fs::path& input_dir, const std::string& name) {
  const fs::path features = input_dir / "features.csv";
  const fs::path edges = input_dir / "edges.txt";
  const fs::path labels = input_dir / "labels.txt";
  for (const auto& p : {features, edges, labels}) {
    if (!fs::exists(p)) throw InputError("missing file: " + p.string());
  }

  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  {
    LineReader r(features);
    std::string line;
    while (r.next(line)) {
      auto t = split_tokens(line, ", \t");
      if (rows == 0) cols = t.size();
      if (t.size() != cols) r.fail("ragged feature row: expected " + std::to_string(cols) + " columns");
      for (auto tok : t) {
        double v = 0.0;
        if (!parse_number(tok, v)) r.fail("bad decimal '" + std::string(tok) + "'");
        data.push_back(v);
      }
      ++rows;
    }
  }
  if (rows == 0 || cols == 0) throw InputError(features.string() + ": no feature rows");

  std::vector<std::string> raw_labels;
  {
    LineReader r(labels);
    std::string line;
    while (r.next(line)) {
      auto t = split_tokens(line, " \t,");
      if (t.size() != 1) r.fail("expected one label per line");
      raw_labels.emplace_back(t[0]);
    }
  }
  if (raw_labels.size() != rows) {
    throw InputError(labels.string() + ": expected " + std::to_string(rows) + " labels, found " +
                     std::to_string(raw_labels.size()));
  }
  std::map<std::string, int> classes;
  for (const auto& l : raw_labels) classes.emplace(l, 0);
  int next = 0;
  for (auto& [k, v] : classes) v = next++;

  Graph g;
  g.num_nodes = rows;
  const auto e = read_edges(edges, rows);
  std::tie(g.offsets, g.targets) = build_csr(rows, e, true);
  g.features = Tensor::matrix(rows, cols, std::move(data));
  g.num_classes = classes.size();
  for (const auto& l : raw_labels) g.labels.push_back(classes.at(l));
  validate(g);
  return single_graph_dataset(name, std::move(g));
}

Dataset convert_linqs(const fs::path& input_dir, const std::string& name) {
  fs::path content, cites;
  if (fs::is_directory(input_dir)) {
    for (const auto& entry : fs::directory_iterator(input_dir)) {
      if (entry.path().extension() == ".content") content = entry.path();
      if (entry.path().extension() == ".cites") cites = entry.path();
    }
  }
  if (content.empty()) throw InputError("missing file: " + (input_dir / "<name>.content").string());
  if (cites.empty()) throw InputError("missing file: " + (input_dir / "<name>.cites").string());

  std::unordered_map<std::string, Index> ids;
  std::vector<double> data;
  std::vector<std::string> raw_labels;
  std::size_t cols = 0;
  {
    LineReader r(content);
    std::string line;
    while (r.next(line)) {
      auto t = split_tokens(line, " \t");
      if (t.size() < 3) r.fail("expected id, features and label");
      if (cols == 0) cols = t.size() - 2;
      if (t.size() - 2 != cols) r.fail("ragged feature row");
      if (!ids.emplace(std::string(t.front()), static_cast<Index>(raw_labels.size())).second) {
        r.fail("duplicate node id '" + std::string(t.front()) + "'");
      }
      for (std::size_t i = 1; i + 1 < t.size(); ++i) {
        double v = 0.0;
        if (!parse_number(t[i], v)) r.fail("bad feature value '" + std::string(t[i]) + "'");
        data.push_back(v);
      }
      raw_labels.emplace_back(t.back());
    }
  }
  const std::size_t n = raw_labels.size();
  std::vector<std::pair<Index, Index>> edges;
  {
    LineReader r(cites);
    std::string line;
    while (r.next(line)) {
      auto t = split_tokens(line, " \t");
      if (t.size() != 2) r.fail("expected 'cited citing'");
      auto a = ids.find(std::string(t[0]));
      auto b = ids.find(std::string(t[1]));
      // Citations to papers absent from .content (present in CiteSeer) are dropped.
      if (a == ids.end() || b == ids.end()) continue;
      edges.emplace_back(a->second, b->second);
    }
  }
  std::map<std::string, int> classes;
  for (const auto& l : raw_labels) classes.emplace(l, 0);
  int next = 0;
  for (auto& [k, v] : classes) v = next++;

  Graph g;
  g.num_nodes = n;
  std::tie(g.offsets, g.targets) = build_csr(n, edges, true);
  g.features = Tensor::matrix(n, cols, std::move(data));
  g.num_classes = classes.size();
  for (const auto& l : raw_labels) g.labels.push_back(classes.at(l));
  validate(g);
  return single_graph_dataset(name, std::move(g));
}

}  // namespace snag

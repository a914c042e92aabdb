#include "snag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "snag/rng.hpp"

namespace snag {

std::string_view to_string(TaskKind task) {
  return task == TaskKind::kTransductive ? "transductive" : "inductive";
}

TaskKind task_from_string(std::string_view name) {
  if (name == "transductive") return TaskKind::kTransductive;
  if (name == "inductive") return TaskKind::kInductive;
  throw std::invalid_argument("unknown task '" + std::string(name) + "' (expected transductive|inductive)");
}

bool Graph::has_edge(std::size_t v, std::size_t u) const {
  auto n = neighbors(v);
  return std::binary_search(n.begin(), n.end(), static_cast<Index>(u));
}

bool Graph::has_all_self_loops() const {
  for (std::size_t v = 0; v < num_nodes; ++v) {
    if (!has_edge(v, v)) return false;
  }
  return true;
}

void validate(const Graph& g) {
  auto bad = [](const std::string& what) { throw std::invalid_argument("invalid graph: " + what); };
  if (g.num_nodes == 0) bad("num_nodes must be positive");
  if (g.offsets.size() != g.num_nodes + 1) bad("offsets length must be num_nodes+1");
  if (g.offsets.front() != 0) bad("offsets must start at 0");
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    if (g.offsets[v + 1] < g.offsets[v]) bad("offsets must be non-decreasing");
  }
  if (static_cast<std::size_t>(g.offsets.back()) != g.targets.size()) bad("last offset must equal targets length");
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    auto n = g.neighbors(v);
    for (std::size_t i = 0; i < n.size(); ++i) {
      if (n[i] < 0 || static_cast<std::size_t>(n[i]) >= g.num_nodes) {
        bad("neighbor " + std::to_string(n[i]) + " of node " + std::to_string(v) + " out of range");
      }
      if (i && n[i] <= n[i - 1]) bad("neighbor lists must be sorted and unique");
    }
  }
  if (!g.features.defined() || g.features.rows() != g.num_nodes) bad("features must have one row per node");
  if (g.multilabel) {
    if (g.label_matrix.size() != g.num_nodes * g.num_classes) bad("label matrix shape mismatch");
  } else {
    if (g.labels.size() != g.num_nodes) bad("one label per node required");
    for (int y : g.labels) {
      if (y < -1 || y >= static_cast<int>(g.num_classes)) bad("label " + std::to_string(y) + " out of range");
    }
  }
  const auto& tm = g.train_mask;
  const auto& vm = g.val_mask;
  const auto& sm = g.test_mask;
  if (!tm.empty() || !vm.empty() || !sm.empty()) {
    if (tm.size() != g.num_nodes || vm.size() != g.num_nodes || sm.size() != g.num_nodes) {
      bad("masks must have one entry per node");
    }
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      if (tm[v] + vm[v] + sm[v] > 1) bad("masks overlap at node " + std::to_string(v));
    }
  }
}

std::pair<std::vector<Index>, std::vector<Index>> build_csr(
    std::size_t num_nodes, std::span<const std::pair<Index, Index>> edges, bool undirected) {
  std::vector<std::vector<Index>> adj(num_nodes);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= num_nodes || static_cast<std::size_t>(v) >= num_nodes) {
      throw std::invalid_argument("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                  ") references a node outside [0," + std::to_string(num_nodes) + ")");
    }
    // (u, v) means v's features flow to u and, if undirected, vice versa.
    adj[u].push_back(v);
    if (undirected && u != v) adj[v].push_back(u);
  }
  std::vector<Index> offsets(num_nodes + 1, 0);
  std::vector<Index> targets;
  for (std::size_t v = 0; v < num_nodes; ++v) {
    auto& n = adj[v];
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
    targets.insert(targets.end(), n.begin(), n.end());
    offsets[v + 1] = static_cast<Index>(targets.size());
  }
  return {std::move(offsets), std::move(targets)};
}

Graph add_self_loops(const Graph& g) {
  Graph out = g;
  out.targets.clear();
  out.targets.reserve(g.targets.size() + g.num_nodes);
  out.offsets.assign(g.num_nodes + 1, 0);
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    auto n = g.neighbors(v);
    const Index self = static_cast<Index>(v);
    auto pos = std::lower_bound(n.begin(), n.end(), self);
    out.targets.insert(out.targets.end(), n.begin(), pos);
    out.targets.push_back(self);
    if (pos != n.end() && *pos == self) ++pos;
    out.targets.insert(out.targets.end(), pos, n.end());
    out.offsets[v + 1] = static_cast<Index>(out.targets.size());
  }
  return out;
}

Graph make_splits(const Graph& g, SplitFractions f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  }
  std::vector<Index> nodes;
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    if (g.is_labeled(v)) nodes.push_back(static_cast<Index>(v));
  }
  Rng rng = make_rng({seed, stream::kSplit});
  std::shuffle(nodes.begin(), nodes.end(), rng);

  const auto n = static_cast<double>(nodes.size());
  const auto n_val = static_cast<std::size_t>(std::floor(f.val * n));
  const auto n_test = static_cast<std::size_t>(std::floor(f.test * n));
  const std::size_t n_train = nodes.size() - n_val - n_test;

  Graph out = g;
  out.train_mask.assign(g.num_nodes, 0);
  out.val_mask.assign(g.num_nodes, 0);
  out.test_mask.assign(g.num_nodes, 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& mask = i < n_train ? out.train_mask : (i < n_train + n_val ? out.val_mask : out.test_mask);
    mask[nodes[i]] = 1;
  }
  return out;
}

void row_normalize(Graph& g) {
  Tensor normalized = g.features.clone();
  const std::size_t n = normalized.rows(), d = normalized.cols();
  auto x = normalized.data();
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x[r * d + j];
    if (s > 0.0) {
      for (std::size_t j = 0; j < d; ++j) x[r * d + j] /= s;
    }
  }
  g.features = normalized;
}

std::vector<Index> mask_rows(std::span<const std::uint8_t> mask) {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) rows.push_back(static_cast<Index>(i));
  }
  return rows;
}

Graph sbm_generate(const SbmConfig& cfg) {
  if (cfg.blocks == 0 || cfg.nodes_per_block == 0) {
    throw std::invalid_argument("sbm: blocks and nodes_per_block must be positive");
  }
  if (!(cfg.p_out >= 0.0 && cfg.p_out < cfg.p_in && cfg.p_in <= 1.0)) {
    throw std::invalid_argument("sbm: require 0 <= p_out < p_in <= 1, got p_in=" + std::to_string(cfg.p_in) +
                                " p_out=" + std::to_string(cfg.p_out));
  }
  if (cfg.feature_noise < 0.0) throw std::invalid_argument("sbm: feature_noise must be non-negative");

  const std::size_t n = cfg.blocks * cfg.nodes_per_block;
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<Index, Index>> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const bool same = u / cfg.nodes_per_block == v / cfg.nodes_per_block;
      if (unif(rng) < (same ? cfg.p_in : cfg.p_out)) edges.emplace_back(u, v);
    }
  }

  Graph g;
  g.num_nodes = n;
  std::tie(g.offsets, g.targets) = build_csr(n, edges, true);
  g.num_classes = cfg.blocks;
  g.labels.resize(n);
  const std::size_t d = cfg.blocks + cfg.extra_dims;
  std::vector<double> x(n * d, 0.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t v = 0; v < n; ++v) {
    const auto block = static_cast<int>(v / cfg.nodes_per_block);
    g.labels[v] = block;
    x[v * d + block] = 1.0;
    if (cfg.feature_noise > 0.0) {
      for (std::size_t j = 0; j < d; ++j) x[v * d + j] += cfg.feature_noise * noise(rng);
    }
  }
  g.features = Tensor::matrix(n, d, std::move(x));
  return g;
}

Dataset single_graph_dataset(std::string name, Graph g) {
  Dataset ds;
  ds.name = std::move(name);
  ds.task = TaskKind::kTransductive;
  ds.multilabel = g.multilabel;
  ds.num_features = g.feature_dim();
  ds.num_classes = g.num_classes;
  ds.graphs.push_back(std::move(g));
  return ds;
}

}  // namespace snag

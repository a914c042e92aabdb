#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snag/tensor.hpp"

namespace snag {

enum class TaskKind { kTransductive, kInductive };

std::string_view to_string(TaskKind task);
TaskKind task_from_string(std::string_view name);

// CSR adjacency: the neighbors aggregated into node v are
// targets[offsets[v] .. offsets[v+1]), sorted ascending and unique.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<Index> offsets;
  std::vector<Index> targets;
  Tensor features;  // [num_nodes x d]

  std::size_t num_classes = 0;
  bool multilabel = false;
  std::vector<int> labels;           // multiclass: one per node, -1 = unlabeled
  std::vector<double> label_matrix;  // multilabel: row-major [num_nodes x num_classes]

  std::vector<std::uint8_t> train_mask;
  std::vector<std::uint8_t> val_mask;
  std::vector<std::uint8_t> test_mask;

  std::size_t num_entries() const { return targets.size(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t degree(std::size_t v) const { return static_cast<std::size_t>(offsets[v + 1] - offsets[v]); }
  std::span<const Index> neighbors(std::size_t v) const {
    return {targets.data() + offsets[v], degree(v)};
  }
  bool has_edge(std::size_t v, std::size_t u) const;
  bool has_all_self_loops() const;
  bool is_labeled(std::size_t v) const { return multilabel || labels[v] >= 0; }
};

// Throws std::invalid_argument describing the first violated invariant.
void validate(const Graph& g);

// CSR from an edge list. Undirected edges are stored in both directions;
// duplicates collapse. Throws on an endpoint >= num_nodes.
std::pair<std::vector<Index>, std::vector<Index>> build_csr(
    std::size_t num_nodes, std::span<const std::pair<Index, Index>> edges, bool undirected);

// Adjacency of N~(v): one self-loop per node, added only where absent.
Graph add_self_loops(const Graph& g);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

// Seeded uniform shuffle of the labeled nodes. val and test receive
// floor(fraction * N) nodes each; train takes the remainder.
Graph make_splits(const Graph& g, SplitFractions fractions, std::uint64_t seed);

// Each feature row divided by its sum when the sum is positive.
void row_normalize(Graph& g);

// Row indices where mask is set.
std::vector<Index> mask_rows(std::span<const std::uint8_t> mask);

// A transductive dataset holds one graph carrying all three masks. An
// inductive dataset holds one graph per sample, each with exactly one mask
// fully set.
struct Dataset {
  std::string name;
  TaskKind task = TaskKind::kTransductive;
  bool multilabel = false;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<Graph> graphs;
};

struct SbmConfig {
  std::size_t blocks = 2;
  std::size_t nodes_per_block = 50;
  double p_in = 0.1;
  double p_out = 0.01;
  double feature_noise = 0.5;
  // Extra Gaussian-noise feature columns appended after the block indicator.
  std::size_t extra_dims = 0;
  std::uint64_t seed = 0;
};

// Stochastic block model: labels are block ids; features are one-hot block
// indicators plus N(0, feature_noise^2) noise. Masks are left empty.
Graph sbm_generate(const SbmConfig& cfg);

Dataset single_graph_dataset(std::string name, Graph g);

}  // namespace snag

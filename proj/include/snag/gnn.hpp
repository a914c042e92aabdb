#pragma once

// Node aggregators, layer aggregators and the full forward pass
//
//   h_v^(l) = act(W^(l) . Phi_n({h_u^(l-1) : u in N~(v)}))
//   z_v     = Phi_l(selected h_v^(l))
//
// followed by a linear classifier. Every aggregator runs over N~(v), so the
// graph handed to GraphContext must already carry one self-loop per node.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snag/genotype.hpp"
#include "snag/graph.hpp"
#include "snag/rng.hpp"
#include "snag/tape.hpp"

namespace snag {

enum class Activation { kElu, kRelu, kIdentity };

struct ParamSpec {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

// Ordered by name, which fixes the parameter order seen by the optimizer.
using ParamSet = std::map<std::string, Tensor>;

std::vector<ParamSpec> node_aggregator_schema(NodeAggregator kind, std::size_t d_in, std::size_t d_out);
std::vector<ParamSpec> layer_aggregator_schema(std::optional<LayerAggregator> kind, std::size_t hidden);
std::vector<ParamSpec> classifier_schema(std::size_t d_z, std::size_t num_classes);

// Glorot-uniform weights; names starting with "bias" or ending in "_b" start at zero.
ParamSet init_params(std::span<const ParamSpec> schema, Rng& rng);
// Throws std::invalid_argument when names or shapes differ from the schema.
void check_params(std::span<const ParamSpec> schema, const ParamSet& params, std::string_view what);

// Per-graph index data shared by all aggregators.
struct GraphContext {
  const Graph* graph = nullptr;
  std::vector<Index> edge_dst;       // segment (receiving node) of each CSR entry
  std::vector<double> gcn_weight;    // 1/sqrt(deg(v) deg(u))
  std::vector<double> mean_weight;   // 1/deg(v)
  std::size_t max_degree = 0;

  explicit GraphContext(const Graph& g);
  std::size_t num_nodes() const { return graph->num_nodes; }
  std::span<const Index> offsets() const { return graph->offsets; }
  std::span<const Index> targets() const { return graph->targets; }
};

struct LstmState {
  Tensor h;
  Tensor c;
};

// Gate layout along columns of wx/wh/b: input, forget, cell, output.
LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev, const Tensor& wx, const Tensor& wh,
                    const Tensor& b);

Tensor activate(Tape& tape, const Tensor& x, Activation act);

Tensor node_aggregate(Tape& tape, NodeAggregator kind, const GraphContext& ctx, const Tensor& h,
                      const ParamSet& params, Activation act = Activation::kElu);

// Attention coefficients over the CSR entries for a GAT-family kind
// (one per entry, summing to 1 within each node's neighborhood).
Tensor attention_weights(Tape& tape, NodeAggregator kind, const GraphContext& ctx, const Tensor& transformed,
                         const ParamSet& params);

// nullopt: identity on the last selected layer.
Tensor layer_aggregate(Tape& tape, std::optional<LayerAggregator> kind, std::span<const Tensor> selected,
                       const ParamSet& params);

struct ModelDims {
  std::size_t in_dim = 0;
  std::size_t hidden = 64;
  std::size_t num_classes = 0;
};

struct GnnModel {
  Genotype genotype;
  ModelDims dims;
  Activation activation = Activation::kElu;
  double dropout = 0.0;
  std::vector<ParamSet> layers;
  ParamSet layer_agg;
  ParamSet classifier;

  static GnnModel create(const Genotype& genotype, ModelDims dims, Rng& rng);

  // Indices (0-based) of layers feeding the layer aggregator, ending with K-1.
  std::vector<std::size_t> selected_layers() const;
  std::size_t readout_dim() const;
  std::vector<Tensor> parameters() const;
  GnnModel clone() const;
};

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
};

Tensor forward(Tape& tape, const GnnModel& model, const GraphContext& ctx, const ForwardOptions& opts = {});
// Rejects a genotype that differs from the one the model was built for.
Tensor forward(Tape& tape, const GnnModel& model, const Genotype& genotype, const GraphContext& ctx,
               const ForwardOptions& opts = {});

// Masked mean softmax cross-entropy (multiclass) or mean per-label sigmoid
// cross-entropy (multilabel), over the listed rows.
Tensor loss(Tape& tape, const Tensor& logits, const Graph& g, std::span<const Index> rows);

enum class MetricKind { kAccuracy, kMicroF1 };

struct MetricCounts {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// Accuracy: argmax (ties to the lowest class) over rows. Micro-F1: global
// TP/FP/FN at sigmoid threshold 0.5.
void accumulate_metric(MetricCounts& counts, MetricKind kind, const Tensor& logits, const Graph& g,
                       std::span<const Index> rows);
double finalize_metric(const MetricCounts& counts, MetricKind kind);
double metric(MetricKind kind, const Tensor& logits, const Graph& g, std::span<const Index> rows);

double accuracy(const Tensor& logits, std::span<const int> labels, std::span<const Index> rows);
double micro_f1(const Tensor& logits, std::span<const double> targets, std::span<const Index> rows);

}  // namespace snag

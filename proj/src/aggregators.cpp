#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "snag/gnn.hpp"

namespace snag {

namespace {

constexpr double kAttentionSlope = 0.2;

std::vector<ParamSpec> lstm_schema(std::size_t in, std::size_t hidden) {
  return {{"lstm_b", 1, 4 * hidden}, {"lstm_wh", hidden, 4 * hidden}, {"lstm_wx", in, 4 * hidden}};
}

const Tensor& param(const ParamSet& p, const char* name) {
  auto it = p.find(name);
  if (it == p.end()) throw std::invalid_argument(std::string("missing parameter '") + name + "'");
  return it->second;
}

}  // namespace

std::vector<ParamSpec> node_aggregator_schema(NodeAggregator kind, std::size_t d_in, std::size_t d_out) {
  std::vector<ParamSpec> s{{"bias", 1, d_out}, {"weight", d_in, d_out}};
  switch (kind) {
    case NodeAggregator::kGat:
    case NodeAggregator::kGatSym:
    case NodeAggregator::kGatCos:
    case NodeAggregator::kGatLinear:
      s.push_back({"att_l", 1, d_out});
      s.push_back({"att_r", 1, d_out});
      break;
    case NodeAggregator::kGatGenLinear:
      s.push_back({"att_g", 1, d_out});
      s.push_back({"att_wl", d_out, d_out});
      s.push_back({"att_wr", d_out, d_out});
      break;
    case NodeAggregator::kSageLstm: {
      auto l = lstm_schema(d_out, d_out);
      s.insert(s.end(), l.begin(), l.end());
      break;
    }
    default:
      break;
  }
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return s;
}

std::vector<ParamSpec> layer_aggregator_schema(std::optional<LayerAggregator> kind, std::size_t hidden) {
  if (kind == LayerAggregator::kLstm) return lstm_schema(hidden, hidden);
  return {};
}

std::vector<ParamSpec> classifier_schema(std::size_t d_z, std::size_t num_classes) {
  return {{"bias", 1, num_classes}, {"weight", d_z, num_classes}};
}

ParamSet init_params(std::span<const ParamSpec> schema, Rng& rng) {
  ParamSet out;
  for (const auto& spec : schema) {
    Tensor t = Tensor::zeros(spec.rows, spec.cols, true);
    const bool is_bias = spec.name.starts_with("bias") || spec.name.ends_with("_b");
    if (!is_bias) {
      const double limit = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& v : t.data()) v = u(rng);
    }
    out.emplace(spec.name, std::move(t));
  }
  return out;
}

void check_params(std::span<const ParamSpec> schema, const ParamSet& params, std::string_view what) {
  if (params.size() != schema.size()) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(schema.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  for (const auto& spec : schema) {
    auto it = params.find(spec.name);
    if (it == params.end()) throw std::invalid_argument(std::string(what) + ": missing parameter " + spec.name);
    const Shape want{spec.rows, spec.cols};
    if (it->second.shape() != want) {
      throw std::invalid_argument(std::string(what) + ": parameter " + spec.name + " has shape " +
                                  shape_to_string(it->second.shape()) + ", expected " + shape_to_string(want));
    }
  }
}

GraphContext::GraphContext(const Graph& g) : graph(&g) {
  if (!g.has_all_self_loops()) {
    throw std::invalid_argument("aggregators need N~(v): add self-loops to the graph first");
  }
  const std::size_t n = g.num_nodes;
  edge_dst.resize(g.num_entries());
  gcn_weight.resize(g.num_entries());
  mean_weight.resize(g.num_entries());
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t dv = g.degree(v);
    max_degree = std::max(max_degree, dv);
    for (Index e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      const auto du = g.degree(static_cast<std::size_t>(g.targets[e]));
      edge_dst[e] = static_cast<Index>(v);
      gcn_weight[e] = 1.0 / std::sqrt(static_cast<double>(dv) * static_cast<double>(du));
      mean_weight[e] = 1.0 / static_cast<double>(dv);
    }
  }
}

LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev, const Tensor& wx, const Tensor& wh,
                    const Tensor& b) {
  const std::size_t h = wh.rows();
  Tensor gates = tape.add_row(tape.add(tape.matmul(x, wx), tape.matmul(prev.h, wh)), b);
  Tensor i = tape.sigmoid(tape.slice_cols(gates, 0, h));
  Tensor f = tape.sigmoid(tape.slice_cols(gates, h, 2 * h));
  Tensor g = tape.tanh(tape.slice_cols(gates, 2 * h, 3 * h));
  Tensor o = tape.sigmoid(tape.slice_cols(gates, 3 * h, 4 * h));
  Tensor c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
  return {tape.mul(o, tape.tanh(c)), c};
}

Tensor activate(Tape& tape, const Tensor& x, Activation act) {
  switch (act) {
    case Activation::kElu: return tape.elu(x);
    case Activation::kRelu: return tape.relu(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

Tensor attention_weights(Tape& tape, NodeAggregator kind, const GraphContext& ctx, const Tensor& wh,
                         const ParamSet& p) {
  const auto dst = std::span<const Index>(ctx.edge_dst);
  const auto src = ctx.targets();
  Tensor score;
  switch (kind) {
    case NodeAggregator::kGat:
    case NodeAggregator::kGatSym:
    case NodeAggregator::kGatLinear: {
      Tensor sl = tape.row_sum(tape.mul_row(wh, param(p, "att_l")));
      Tensor sr = tape.row_sum(tape.mul_row(wh, param(p, "att_r")));
      if (kind == NodeAggregator::kGatLinear) {
        sl = tape.tanh(sl);
        sr = tape.tanh(sr);
      }
      score = tape.add(tape.gather_rows(sl, dst), tape.gather_rows(sr, src));
      if (kind == NodeAggregator::kGatSym) {
        score = tape.add(score, tape.add(tape.gather_rows(sl, src), tape.gather_rows(sr, dst)));
      }
      break;
    }
    case NodeAggregator::kGatCos: {
      Tensor l = tape.mul_row(wh, param(p, "att_l"));
      Tensor r = tape.mul_row(wh, param(p, "att_r"));
      score = tape.row_sum(tape.mul(tape.gather_rows(l, dst), tape.gather_rows(r, src)));
      break;
    }
    case NodeAggregator::kGatGenLinear: {
      Tensor pl = tape.matmul(wh, param(p, "att_wl"));
      Tensor pr = tape.matmul(wh, param(p, "att_wr"));
      Tensor t = tape.tanh(tape.add(tape.gather_rows(pl, dst), tape.gather_rows(pr, src)));
      score = tape.row_sum(tape.mul_row(t, param(p, "att_g")));
      break;
    }
    default:
      throw std::invalid_argument("attention_weights: " + std::string(to_string(kind)) + " is not an attention kind");
  }
  return tape.segment_softmax(tape.leaky_relu(score, kAttentionSlope), ctx.offsets());
}

Tensor node_aggregate(Tape& tape, NodeAggregator kind, const GraphContext& ctx, const Tensor& h,
                      const ParamSet& params, Activation act) {
  if (h.rank() != 2 || h.rows() != ctx.num_nodes()) {
    throw std::invalid_argument("node_aggregate: features " + shape_to_string(h.shape()) + " do not match " +
                                std::to_string(ctx.num_nodes()) + " nodes");
  }
  const Tensor& w = param(params, "weight");
  check_params(node_aggregator_schema(kind, h.cols(), w.cols()), params, to_string(kind));
  const Tensor& bias = param(params, "bias");
  const auto offsets = ctx.offsets();
  const auto targets = ctx.targets();

  Tensor out;
  switch (kind) {
    case NodeAggregator::kGcn:
      out = tape.neighbor_sum(tape.matmul(h, w), offsets, targets, std::span<const double>(ctx.gcn_weight));
      break;
    case NodeAggregator::kSageSum:
      out = tape.matmul(tape.neighbor_sum(h, offsets, targets), w);
      break;
    case NodeAggregator::kSageMean:
      out = tape.matmul(tape.neighbor_sum(h, offsets, targets, std::span<const double>(ctx.mean_weight)), w);
      break;
    case NodeAggregator::kSageMax:
      out = tape.matmul(tape.neighbor_max(h, offsets, targets), w);
      break;
    case NodeAggregator::kMlp:
      out = tape.matmul(h, w);
      break;
    case NodeAggregator::kSageLstm: {
      // Neighbors are consumed in ascending node order (the CSR order); the
      // state of node v stops updating after deg(v) steps.
      Tensor wh = tape.matmul(h, w);
      const std::size_t n = ctx.num_nodes(), d = w.cols();
      LstmState state{Tensor::zeros(n, d), Tensor::zeros(n, d)};
      const Graph& g = *ctx.graph;
      for (std::size_t t = 0; t < ctx.max_degree; ++t) {
        std::vector<Index> active, inputs;
        for (std::size_t v = 0; v < n; ++v) {
          if (g.degree(v) > t) {
            active.push_back(static_cast<Index>(v));
            inputs.push_back(g.targets[g.offsets[v] + static_cast<Index>(t)]);
          }
        }
        Tensor x = tape.gather_rows(wh, inputs);
        LstmState prev{tape.gather_rows(state.h, active), tape.gather_rows(state.c, active)};
        LstmState next = lstm_cell(tape, x, prev, param(params, "lstm_wx"), param(params, "lstm_wh"),
                                   param(params, "lstm_b"));
        state.h = tape.scatter_rows(state.h, active, next.h);
        state.c = tape.scatter_rows(state.c, active, next.c);
      }
      out = state.h;
      break;
    }
    case NodeAggregator::kGat:
    case NodeAggregator::kGatSym:
    case NodeAggregator::kGatCos:
    case NodeAggregator::kGatLinear:
    case NodeAggregator::kGatGenLinear: {
      Tensor wh = tape.matmul(h, w);
      Tensor alpha = attention_weights(tape, kind, ctx, wh, params);
      out = tape.neighbor_sum(wh, offsets, targets, alpha);
      break;
    }
  }
  if (!out.defined()) throw std::invalid_argument("node_aggregate: unknown aggregator kind");
  return activate(tape, tape.add_row(out, bias), act);
}

Tensor layer_aggregate(Tape& tape, std::optional<LayerAggregator> kind, std::span<const Tensor> selected,
                       const ParamSet& params) {
  if (selected.empty()) throw std::invalid_argument("layer_aggregate: empty layer selection");
  if (!kind) return selected.back();
  switch (*kind) {
    case LayerAggregator::kConcat:
      if (selected.size() == 1) return selected.front();
      return tape.concat(selected, 1);
    case LayerAggregator::kMax: {
      Tensor acc = selected.front();
      for (std::size_t i = 1; i < selected.size(); ++i) acc = tape.maximum(acc, selected[i]);
      return acc;
    }
    case LayerAggregator::kLstm: {
      const std::size_t n = selected.front().rows(), d = selected.front().cols();
      check_params(layer_aggregator_schema(kind, d), params, "layer-lstm");
      LstmState state{Tensor::zeros(n, d), Tensor::zeros(n, d)};
      for (const auto& h : selected) {
        state = lstm_cell(tape, h, state, param(params, "lstm_wx"), param(params, "lstm_wh"), param(params, "lstm_b"));
      }
      return state.h;
    }
  }
  throw std::invalid_argument("layer_aggregate: unknown layer aggregator");
}

}  // namespace snag

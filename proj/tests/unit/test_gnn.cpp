#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../support/helpers.hpp"
#include "snag/gnn.hpp"

using namespace snag;
using snag::test::random_graph;
using snag::test::random_tensor;

namespace {

Graph path2(double a, double b) {
  Graph g;
  g.num_nodes = 2;
  std::vector<std::pair<Index, Index>> e{{0, 1}};
  std::tie(g.offsets, g.targets) = build_csr(2, e, true);
  g.features = Tensor::matrix(2, 1, {a, b});
  g.num_classes = 1;
  g.labels = {0, 0};
  return add_self_loops(g);
}

ParamSet random_params(NodeAggregator k, std::size_t din, std::size_t dout, std::uint64_t seed) {
  Rng rng = make_rng({seed});
  ParamSet p = init_params(node_aggregator_schema(k, din, dout), rng);
  std::mt19937_64 r2(seed + 1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& [name, t] : p)
    for (auto& v : t.data()) v = u(r2);  // nonzero biases as well
  return p;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

const std::vector<NodeAggregator> kGat{NodeAggregator::kGat, NodeAggregator::kGatSym, NodeAggregator::kGatCos,
                                       NodeAggregator::kGatLinear, NodeAggregator::kGatGenLinear};

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("GCN on a two-node path averages both endpoints") {
  Graph g = path2(1.0, 3.0);
  GraphContext ctx(g);
  for (double w : ctx.gcn_weight) CHECK(w == 0.5);
  ParamSet p{{"weight", Tensor::matrix(1, 1, {1.0})}, {"bias", Tensor::zeros(1, 1)}};
  Tape tape;
  Tensor out = node_aggregate(tape, NodeAggregator::kGcn, ctx, g.features, p, Activation::kIdentity);
  CHECK(values(out) == std::vector<double>{2.0, 2.0});
}

TEST_CASE("aggregators require self-loops and matching shapes") {
  Graph g;
  g.num_nodes = 2;
  g.offsets = {0, 0, 0};
  g.features = Tensor::zeros(2, 1);
  CHECK_THROWS(GraphContext(g));
  Graph ok = path2(1, 2);
  GraphContext ctx(ok);
  Tape tape;
  ParamSet p = random_params(NodeAggregator::kGcn, 3, 2, 0);
  CHECK_THROWS(node_aggregate(tape, NodeAggregator::kGcn, ctx, ok.features, p));
  CHECK_THROWS(node_aggregate(tape, NodeAggregator::kGat, ctx, ok.features, random_params(NodeAggregator::kGcn, 1, 2, 0)));
}

TEST_CASE("SAGE mean of a constant neighborhood returns the constant") {
  std::mt19937_64 rng(3);
  Graph g = random_graph(8, 0.4, 2, 2, rng);
  for (std::size_t v = 0; v < 8; ++v) {
    g.features.at(v, 0) = 1.5;
    g.features.at(v, 1) = -0.25;
  }
  ParamSet p{{"weight", Tensor::matrix(2, 2, {1, 0, 0, 1})}, {"bias", Tensor::zeros(1, 2)}};
  GraphContext ctx(g);
  Tape tape;
  Tensor out = node_aggregate(tape, NodeAggregator::kSageMean, ctx, g.features, p, Activation::kIdentity);
  for (std::size_t v = 0; v < 8; ++v) {
    CHECK(out.at(v, 0) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(out.at(v, 1) == doctest::Approx(-0.25).epsilon(1e-15));
  }
}

TEST_CASE("attention with constant scores reduces to SAGE mean") {
  std::mt19937_64 rng(5);
  Graph g = random_graph(9, 0.35, 3, 2, rng);
  GraphContext ctx(g);
  for (auto k : kGat) {
    ParamSet p = random_params(k, 3, 4, 7);
    for (const char* name : {"att_l", "att_r", "att_g"}) {
      if (p.count(name)) std::fill(p[name].data().begin(), p[name].data().end(), 0.0);
    }
    ParamSet mean{{"weight", p["weight"]}, {"bias", p["bias"]}};
    Tape tape;
    Tensor a = node_aggregate(tape, k, ctx, g.features, p);
    Tensor b = node_aggregate(tape, NodeAggregator::kSageMean, ctx, g.features, mean);
    CHECK(test::max_abs_diff(a.data(), b.data()) < 1e-12);
  }
}

TEST_CASE("attention weights sum to one per node") {
  std::mt19937_64 rng(8);
  Graph g = random_graph(12, 0.3, 3, 2, rng);
  GraphContext ctx(g);
  for (auto k : kGat) {
    ParamSet p = random_params(k, 3, 5, 11);
    Tape tape;
    Tensor wh = tape.matmul(g.features, p["weight"]);
    Tensor alpha = attention_weights(tape, k, ctx, wh, p);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      double s = 0.0;
      for (Index e = g.offsets[v]; e < g.offsets[v + 1]; ++e) s += alpha.data()[e];
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("aggregators are permutation equivariant") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    Graph g = random_graph(8, 0.4, 3, 2, rng);
    std::vector<Index> perm(8);  // new id of old node v
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::pair<Index, Index>> edges;
    for (std::size_t v = 0; v < 8; ++v)
      for (Index u : g.neighbors(v)) edges.emplace_back(perm[v], perm[u]);
    Graph h;
    h.num_nodes = 8;
    std::tie(h.offsets, h.targets) = build_csr(8, edges, false);
    h.features = Tensor::zeros(8, 3);
    for (std::size_t v = 0; v < 8; ++v)
      for (std::size_t j = 0; j < 3; ++j) h.features.at(perm[v], j) = g.features.at(v, j);
    GraphContext cg(g), ch(h);
    for (auto k : all_node_aggregators()) {
      if (k == NodeAggregator::kSageLstm) continue;
      ParamSet p = random_params(k, 3, 4, seed + 100);
      Tape tape;
      Tensor a = node_aggregate(tape, k, cg, g.features, p);
      Tensor b = node_aggregate(tape, k, ch, h.features, p);
      double err = 0.0;
      for (std::size_t v = 0; v < 8; ++v) {
        for (std::size_t j = 0; j < 4; ++j) {
          CHECK(std::isfinite(a.at(v, j)));
          err = std::max(err, std::abs(a.at(v, j) - b.at(perm[v], j)));
        }
      }
      INFO(to_string(k));
      CHECK(err < 1e-12);
    }
  }
}

TEST_CASE("SAGE-LSTM matches a per-node LSTM over neighbors in ascending order") {
  std::mt19937_64 rng(21);
  Graph g = random_graph(7, 0.45, 2, 2, rng);
  GraphContext ctx(g);
  const std::size_t d = 3;
  ParamSet p = random_params(NodeAggregator::kSageLstm, 2, d, 4);
  Tape tape;
  Tensor out = node_aggregate(tape, NodeAggregator::kSageLstm, ctx, g.features, p, Activation::kIdentity);

  auto W = p["weight"], wx = p["lstm_wx"], wh = p["lstm_wh"], b = p["lstm_b"], bias = p["bias"];
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    std::vector<double> h(d, 0.0), c(d, 0.0);
    for (Index u : g.neighbors(v)) {
      std::vector<double> x(d, 0.0);
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < 2; ++i) x[j] += g.features.at(u, i) * W.at(i, j);
      std::vector<double> z(4 * d);
      for (std::size_t q = 0; q < 4 * d; ++q) {
        z[q] = b.at(0, q);
        for (std::size_t i = 0; i < d; ++i) z[q] += x[i] * wx.at(i, q) + h[i] * wh.at(i, q);
      }
      for (std::size_t j = 0; j < d; ++j) {
        c[j] = sigm(z[d + j]) * c[j] + sigm(z[j]) * std::tanh(z[2 * d + j]);
        h[j] = sigm(z[3 * d + j]) * std::tanh(c[j]);
      }
    }
    for (std::size_t j = 0; j < d; ++j) CHECK(out.at(v, j) == doctest::Approx(h[j] + bias.at(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("MLP ignores the neighborhood") {
  std::mt19937_64 rng(2);
  Graph g = random_graph(8, 0.5, 3, 2, rng);
  Graph lonely = g;
  lonely.offsets.assign(9, 0);
  lonely.targets.clear();
  lonely = add_self_loops(lonely);
  ParamSet p = random_params(NodeAggregator::kMlp, 3, 4, 1);
  GraphContext a(g), b(lonely);
  Tape tape;
  CHECK(test::max_abs_diff(node_aggregate(tape, NodeAggregator::kMlp, a, g.features, p).data(),
                           node_aggregate(tape, NodeAggregator::kMlp, b, lonely.features, p).data()) == 0.0);
}

TEST_CASE("layer aggregators") {
  Tape tape;
  Tensor x = Tensor::matrix(2, 2, {1, -2, 3, 0});
  std::vector<Tensor> same{x, x};
  CHECK(values(layer_aggregate(tape, LayerAggregator::kMax, same, {})) == values(x));
  std::vector<Tensor> parts{Tensor::zeros(5, 4), Tensor::zeros(5, 8)};
  CHECK(layer_aggregate(tape, LayerAggregator::kConcat, parts, {}).shape() == Shape{5, 12});
  std::vector<Tensor> m{Tensor::matrix(1, 2, {1, 5}), Tensor::matrix(1, 2, {3, 2})};
  CHECK(values(layer_aggregate(tape, LayerAggregator::kMax, m, {})) == std::vector<double>{3, 5});
  CHECK(values(layer_aggregate(tape, std::nullopt, m, {})) == std::vector<double>{3, 2});
  CHECK_THROWS(layer_aggregate(tape, LayerAggregator::kMax, std::span<const Tensor>{}, {}));
  CHECK_THROWS(layer_aggregate(tape, LayerAggregator::kLstm, m, {}));
}

TEST_CASE("forward: zero skips equal the plain stack, K=1 works") {
  std::mt19937_64 rng(4);
  Graph g = random_graph(10, 0.3, 4, 3, rng);
  GraphContext ctx(g);
  Genotype jk = decode("node:gcn,gat,sage-max;skip:00;layer:concat");
  Genotype plain = decode("node:gcn,gat,sage-max;skip:00");
  Rng r1 = make_rng({1});
  GnnModel m = GnnModel::create(jk, {4, 6, 3}, r1);
  CHECK(m.selected_layers() == std::vector<std::size_t>{2});
  CHECK(m.readout_dim() == 6);
  GnnModel p = m.clone();
  p.genotype = plain;
  Tape tape;
  CHECK(test::max_abs_diff(forward(tape, m, ctx).data(), forward(tape, p, ctx).data()) == 0.0);
  CHECK_THROWS(forward(tape, m, plain, ctx));

  Rng r2 = make_rng({2});
  GnnModel one = GnnModel::create(decode("node:gat-cos;skip:;layer:lstm"), {4, 5, 3}, r2);
  CHECK(forward(tape, one, ctx).shape() == Shape{10, 3});

  Rng r3 = make_rng({3});
  GnnModel wide = GnnModel::create(decode("node:gcn,gcn,gcn;skip:11;layer:concat"), {4, 6, 3}, r3);
  CHECK(wide.readout_dim() == 18);
  CHECK(wide.classifier.at("weight").shape() == Shape{18, 3});
}

TEST_CASE("dropout in forward needs an rng and is deterministic with one") {
  std::mt19937_64 rng(4);
  Graph g = random_graph(10, 0.3, 4, 3, rng);
  GraphContext ctx(g);
  Rng r = make_rng({1});
  GnnModel m = GnnModel::create(decode("node:gcn,mlp;skip:1;layer:max"), {4, 6, 3}, r);
  m.dropout = 0.5;
  Tape tape;
  CHECK_THROWS(forward(tape, m, ctx, {.training = true}));
  Rng d1(9), d2(9);
  CHECK(test::max_abs_diff(forward(tape, m, ctx, {true, &d1}).data(), forward(tape, m, ctx, {true, &d2}).data()) ==
        0.0);
}

TEST_CASE("losses") {
  Graph g;
  g.num_nodes = 1;
  g.labels = {3};
  Tape tape;
  std::vector<Index> rows{0};
  CHECK(loss(tape, Tensor::zeros(1, 7), g, rows).item() == doctest::Approx(std::log(7.0)).epsilon(1e-14));
  g.labels = {0};
  CHECK(loss(tape, Tensor::matrix(1, 2, {2, 0}), g, rows).item() ==
        doctest::Approx(-std::log(std::exp(2.0) / (std::exp(2.0) + 1.0))));
  CHECK(loss(tape, Tensor::matrix(1, 2, {2, 0}), g, rows).item() == doctest::Approx(0.1269).epsilon(1e-3));
  CHECK(loss(tape, Tensor::matrix(1, 2, {60, -60}), g, rows).item() < 1e-40);
  g.labels = {5};
  CHECK_THROWS(loss(tape, Tensor::zeros(1, 2), g, rows));

  Graph ml;
  ml.num_nodes = 1;
  ml.multilabel = true;
  ml.num_classes = 2;
  ml.label_matrix = {1, 0};
  CHECK(loss(tape, Tensor::zeros(1, 2), ml, rows).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("accuracy and micro-F1") {
  Tensor logits = Tensor::matrix(3, 3, {3, 1, 0, 0, 2, 2, 1, 1, 1});
  std::vector<int> labels{0, 1, 0};
  std::vector<Index> rows{0, 1, 2};
  CHECK(accuracy(logits, labels, rows) == 1.0);  // ties go to the lowest class
  std::vector<int> wrong{2, 2, 1};
  CHECK(accuracy(logits, wrong, rows) == 0.0);
  CHECK_THROWS(accuracy(logits, labels, std::span<const Index>{}));

  // TP=2, FP=1, FN=1
  Tensor ml = Tensor::matrix(2, 2, {1, 1, 1, -1});
  std::vector<double> t{1, 0, 1, 1};
  std::vector<Index> r2{0, 1};
  CHECK(micro_f1(ml, t, r2) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  std::vector<double> exact{1, 1, 1, 0};
  CHECK(micro_f1(ml, exact, r2) == 1.0);
  std::vector<double> none{0, 0, 0, 1};
  CHECK(micro_f1(ml, none, r2) == 0.0);
}

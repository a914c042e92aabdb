#include <doctest.h>

#include <cmath>
#include <map>
#include <unordered_set>

#include "snag/genotype.hpp"

using namespace snag;

namespace {

SearchSpaceConfig small_space() {
  SearchSpaceConfig c;
  c.layers = 2;
  c.node_aggs = {NodeAggregator::kGcn, NodeAggregator::kGat};
  return c;
}

}  // namespace

TEST_CASE("space sizes against the enumerator") {
  CHECK(space_size(small_space()) == 24);
  CHECK(enumerate(small_space()).size() == 24);
  CHECK(space_size(SearchSpaceConfig{}) == 15972);
  CHECK(enumerate(SearchSpaceConfig{}).size() == 15972);
  SearchSpaceConfig single;
  single.layers = 1;
  single.node_aggs = {NodeAggregator::kMlp};
  single.layer_aggs = {LayerAggregator::kMax};
  CHECK(space_size(single) == 1);
  SearchSpaceConfig ablated;
  ablated.layer_aggregation = false;
  CHECK(space_size(ablated) == 1331);
  CHECK(enumerate(ablated).size() == 1331);
}

TEST_CASE("enumeration order, uniqueness and cap") {
  auto all = enumerate(small_space());
  std::unordered_set<Genotype> seen(all.begin(), all.end());
  CHECK(seen.size() == all.size());
  CHECK(encode(all.front()) == "node:gat,gat;skip:0;layer:concat");
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(encode(all[i - 1]) < encode(all[i]));
  // Tuple order over (node ids, skip bits, layer id), ids compared as strings.
  auto key = [](const Genotype& g) {
    std::vector<std::string> k;
    for (auto n : g.node_aggs) k.emplace_back(to_string(n));
    for (bool b : g.skips) k.emplace_back(b ? "1" : "0");
    k.emplace_back(to_string(*g.layer_agg));
    return k;
  };
  auto every = enumerate(SearchSpaceConfig{});
  for (std::size_t i = 1; i < every.size(); ++i) REQUIRE(key(every[i - 1]) < key(every[i]));
  CHECK_THROWS_WITH_AS(enumerate(SearchSpaceConfig{}, 100), doctest::Contains("15972"), InputError);
}

TEST_CASE("encode and decode") {
  Genotype g{{NodeAggregator::kGcn, NodeAggregator::kGat, NodeAggregator::kSageMean}, {true, false},
             LayerAggregator::kConcat};
  CHECK(encode(g) == "node:gcn,gat,sage-mean;skip:10;layer:concat");
  CHECK(decode(encode(g)) == g);
  Genotype one = decode("node:gcn;skip:;layer:max");
  CHECK(one.layers() == 1);
  CHECK(one.skips.empty());
  CHECK(one.layer_agg == LayerAggregator::kMax);
  Genotype abl = decode("node:gcn,mlp;skip:0");
  CHECK_FALSE(abl.layer_agg.has_value());

  Rng rng = make_rng({42});
  for (int i = 0; i < 100; ++i) {
    Genotype s = sample_uniform(SearchSpaceConfig{}, rng);
    CHECK(decode(encode(s)) == s);
  }
}

TEST_CASE("malformed genotype strings report a position") {
  auto pos = [](const char* s) {
    try {
      decode(s);
    } catch (const GenotypeParseError& e) {
      return static_cast<long>(e.position());
    }
    return -1L;
  };
  CHECK(pos("nod:gcn;skip:;layer:max") == 0);
  CHECK(pos("node:gcn,foo;skip:1;layer:max") == 9);
  CHECK(pos("node:gcn,gat;skip:;layer:max") == 18);
  CHECK(pos("node:gcn;skip:;layer:sum") == 21);
  CHECK(pos("node:gcn;skip:;layer:max;") == 24);
}

TEST_CASE("baselines are members of the default space") {
  CHECK(encode(baseline_genotype("GCN")) == "node:gcn,gcn,gcn;skip:00;layer:concat");
  CHECK(encode(baseline_genotype("GAT-JK")) == "node:gat,gat,gat;skip:11;layer:concat");
  CHECK(encode(baseline_genotype("GIN")) == "node:sage-sum,sage-sum,sage-sum;skip:00;layer:concat");
  CHECK(encode(baseline_genotype("graphsage-max-jk")) == "node:sage-max,sage-max,sage-max;skip:11;layer:concat");
  CHECK_THROWS_AS(baseline_genotype("LGCN"), InputError);
  const auto all = enumerate(SearchSpaceConfig{});
  const std::unordered_set<Genotype> space(all.begin(), all.end());
  for (const auto& name : baseline_names()) {
    INFO(name);
    CHECK(space.count(baseline_genotype(name)) == 1);
    CHECK(contains(SearchSpaceConfig{}, baseline_genotype(name)));
  }
}

TEST_CASE("uniform sampling over a 24-point space") {
  const int n = 20000;
  std::map<std::string, int> counts;
  Rng rng = make_rng({7});
  for (int i = 0; i < n; ++i) ++counts[encode(sample_uniform(small_space(), rng))];
  CHECK(counts.size() == 24);
  const double p = 1.0 / 24.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  double chi2 = 0.0;
  for (const auto& [g, c] : counts) {
    CHECK(std::abs(c - n * p) < 4 * sigma);
    chi2 += (c - n * p) * (c - n * p) / (n * p);
  }
  // 23 degrees of freedom; 0.999 quantile is about 49.7.
  CHECK(chi2 < 49.7);
}

TEST_CASE("canonicalization and membership") {
  SearchSpaceConfig c;
  c.node_aggs = {NodeAggregator::kSageSum, NodeAggregator::kGcn, NodeAggregator::kGcn};
  auto cc = canonicalize(c);
  CHECK(cc.node_aggs == std::vector<NodeAggregator>{NodeAggregator::kGcn, NodeAggregator::kSageSum});
  c.node_aggs.clear();
  CHECK_THROWS(canonicalize(c));
  SearchSpaceConfig abl;
  abl.layer_aggregation = false;
  CHECK(contains(abl, decode("node:gcn,gcn,gcn;skip:00")));
  CHECK_FALSE(contains(abl, decode("node:gcn,gcn,gcn;skip:00;layer:max")));
  CHECK_FALSE(contains(abl, decode("node:gcn,gcn,gcn;skip:01")));
}

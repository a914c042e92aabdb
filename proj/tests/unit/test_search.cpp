#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "../support/helpers.hpp"
#include "snag/gradcheck.hpp"
#include "snag/search.hpp"

using namespace snag;

namespace {

SearchSpaceConfig small_space() {
  SearchSpaceConfig c;
  c.layers = 2;
  c.node_aggs = {NodeAggregator::kGcn, NodeAggregator::kMlp};
  return c;
}

Dataset sbm_dataset(SbmConfig cfg, std::uint64_t split_seed = 0) {
  return single_graph_dataset("sbm", make_splits(sbm_generate(cfg), {}, split_seed));
}

ChildConfig quick_child() {
  ChildConfig c;
  c.hidden = 8;
  c.max_epochs = 40;
  c.patience = 10;
  c.dropout = 0.0;
  return c;
}

std::vector<double> snapshot(const std::vector<Tensor>& ps) {
  std::vector<double> out;
  for (const auto& p : ps) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

}  // namespace

TEST_CASE("ParamDict round trip, absence and key independence") {
  ParamDict d;
  CHECK_FALSE(d.get(0, "gcn").has_value());
  std::mt19937_64 rng(1);
  ParamSet a{{"weight", test::random_tensor(2, 3, rng)}, {"bias", test::random_tensor(1, 3, rng)}};
  ParamSet b{{"weight", test::random_tensor(2, 3, rng)}, {"bias", test::random_tensor(1, 3, rng)}};
  d.put(0, "gcn", a);
  d.put(1, "gcn", b);
  auto got = d.get(0, "gcn");
  REQUIRE(got.has_value());
  CHECK(test::max_abs_diff(got->at("weight").data(), a.at("weight").data()) == 0.0);
  CHECK_FALSE(got->at("weight").same_storage(a.at("weight")));
  CHECK(test::max_abs_diff(d.get(1, "gcn")->at("bias").data(), b.at("bias").data()) == 0.0);
  ParamSet wrong{{"weight", Tensor::zeros(3, 3)}, {"bias", Tensor::zeros(1, 3)}};
  CHECK_THROWS_AS(d.put(0, "gcn", wrong), std::invalid_argument);
  CHECK(d.size() == 2);
}

TEST_CASE("controller slots, uniform start and determinism") {
  Controller c(SearchSpaceConfig{}, {}, 0);
  CHECK(c.num_slots() == 6);
  CHECK(c.slot_sizes() == std::vector<std::size_t>{11, 11, 11, 2, 2, 3});
  Rng r1 = make_rng({5}), r2 = make_rng({5});
  auto s1 = c.sample(r1), s2 = c.sample(r2);
  CHECK(s1.genotype == s2.genotype);
  CHECK(s1.log_probs.size() == 6);
  for (int i = 0; i < 3; ++i) CHECK(s1.log_probs[i] == doctest::Approx(-std::log(11.0)).epsilon(1e-14));
  CHECK(s1.log_probs[5] == doctest::Approx(-std::log(3.0)).epsilon(1e-14));
  CHECK(s1.entropy == doctest::Approx(3 * std::log(11.0) + 2 * std::log(2.0) + std::log(3.0)));

  SearchSpaceConfig abl;
  abl.layer_aggregation = false;
  Controller a(abl, {}, 0);
  CHECK(a.num_slots() == 3);
  Rng r3 = make_rng({1});
  CHECK_FALSE(a.sample(r3).genotype.layer_agg.has_value());
}

TEST_CASE("slot probabilities are distributions after training steps") {
  Controller c(small_space(), {.lr = 0.05}, 3);
  Rng rng = make_rng({3});
  for (int i = 0; i < 5; ++i) {
    auto s = c.sample(rng);
    Episode ep{s.genotype, i % 2 ? 1.0 : 0.2};
    c.reinforce_update(std::span<const Episode>(&ep, 1));
  }
  auto s = c.sample(rng);
  auto probs = c.slot_probabilities(s.genotype);
  double lp = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    double sum = 0.0;
    for (double p : probs[k]) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    lp += std::log(probs[k][c.actions_of(s.genotype)[k]]);
  }
  CHECK(lp == doctest::Approx(c.log_prob(s.genotype)).epsilon(1e-12));
  double sampled = 0.0;
  for (double x : s.log_probs) sampled += x;
  CHECK(sampled == doctest::Approx(lp).epsilon(1e-12));
}

TEST_CASE("baseline moves by the EMA rule after the update") {
  Controller c(small_space(), {.baseline_decay = 0.9}, 0);
  Episode ep{decode("node:gcn,gcn;skip:0;layer:max"), 1.0};
  c.reinforce_update(std::span<const Episode>(&ep, 1));
  CHECK(c.baseline() == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("zero advantage without entropy leaves the controller unchanged") {
  Controller c(small_space(), {.entropy_weight = 0.0}, 0);
  c.set_baseline(0.6);
  const auto before = snapshot(c.parameters());
  std::vector<Episode> eps{{decode("node:gcn,mlp;skip:1;layer:lstm"), 0.6},
                           {decode("node:mlp,mlp;skip:0;layer:concat"), 0.6}};
  c.reinforce_update(eps);
  CHECK(snapshot(c.parameters()) == before);
}

TEST_CASE("surrogate gradient matches finite differences") {
  Controller c(small_space(), {.hidden = 6, .embed = 4}, 1);
  // move heads off zero so every term is exercised
  Rng rng = make_rng({1});
  for (int i = 0; i < 3; ++i) {
    Episode ep{c.sample(rng).genotype, 0.3 * i};
    c.reinforce_update(std::span<const Episode>(&ep, 1));
  }
  std::vector<Episode> eps{{decode("node:gcn,mlp;skip:1;layer:lstm"), 0.9},
                           {decode("node:mlp,gcn;skip:0;layer:max"), 0.1}};
  auto params = c.parameters();
  auto rep = finite_diff_check([&](Tape& t) { return c.surrogate(t, eps); }, params, 1e-5);
  CHECK(rep.max_relative_error < 1e-5);
}

TEST_CASE("shifted rewards with a matching baseline give the same update") {
  std::vector<Episode> base{{decode("node:gcn,mlp;skip:1;layer:lstm"), 0.9},
                            {decode("node:mlp,gcn;skip:0;layer:max"), 0.1}};
  auto shifted = base;
  for (auto& e : shifted) e.reward += 0.25;
  Controller a(small_space(), {}, 2), b(small_space(), {}, 2);
  a.set_baseline(0.5);
  b.set_baseline(0.75);  // the stationary value under the shifted rewards
  a.reinforce_update(base);
  b.reinforce_update(shifted);
  CHECK(test::max_abs_diff(snapshot(a.parameters()), snapshot(b.parameters())) < 1e-10);
  auto g = decode("node:gcn,mlp;skip:1;layer:lstm");
  auto pa = a.slot_probabilities(g), pb = b.slot_probabilities(g);
  for (std::size_t s = 0; s < pa.size(); ++s) {
    CHECK(std::max_element(pa[s].begin(), pa[s].end()) - pa[s].begin() ==
          std::max_element(pb[s].begin(), pb[s].end()) - pb[s].begin());
  }
}

TEST_CASE("GCN separates a noiseless disconnected SBM") {
  Dataset ds = sbm_dataset({.blocks = 3, .nodes_per_block = 20, .p_in = 1.0, .p_out = 0.0, .feature_noise = 0.0});
  TaskData task(ds);
  ChildConfig cfg;
  cfg.hidden = 16;
  cfg.max_epochs = 200;
  auto r = train_child(baseline_genotype("GCN"), task, cfg, make_rng({0, 1}), make_rng({0, 2}));
  CHECK(r.val_metric == 1.0);
  CHECK(r.epochs <= 200);
  CHECK_FALSE(r.diverged);
}

TEST_CASE("train_child with zero epochs and determinism") {
  Dataset ds = sbm_dataset({.blocks = 2, .nodes_per_block = 15, .p_in = 0.4, .p_out = 0.05, .feature_noise = 0.5});
  TaskData task(ds);
  ChildConfig cfg = quick_child();
  cfg.max_epochs = 0;
  Genotype g = decode("node:gcn,sage-mean;skip:1;layer:concat");
  Rng init = make_rng({3});
  GnnModel fresh = GnnModel::create(g, {task.in_dim(), cfg.hidden, task.num_classes()}, init);
  auto r = train_child(g, task, cfg, make_rng({3}), make_rng({4}));
  CHECK(r.epochs == 0);
  CHECK(snapshot(r.model.parameters()) == snapshot(fresh.parameters()));
  CHECK(r.val_metric == evaluate(fresh, task).first);

  cfg = quick_child();
  cfg.dropout = 0.3;
  auto a = train_child(g, task, cfg, make_rng({3}), make_rng({4}));
  auto b = train_child(g, task, cfg, make_rng({3}), make_rng({4}));
  CHECK(a.val_metric == b.val_metric);
  CHECK(a.test_metric == b.test_metric);
  CHECK(snapshot(a.model.parameters()) == snapshot(b.model.parameters()));
}

TEST_CASE("weight sharing writes back and reloads trained ops") {
  Dataset ds = sbm_dataset({.blocks = 2, .nodes_per_block = 15, .p_in = 0.4, .p_out = 0.05});
  TaskData task(ds);
  ParamDict dict;
  Genotype g = decode("node:gcn,gat;skip:1;layer:concat");
  auto r = train_child(g, task, quick_child(), make_rng({1}), make_rng({2}), &dict);
  CHECK(dict.contains(0, "gcn"));
  CHECK(dict.contains(1, "gat"));
  CHECK_FALSE(dict.contains(2, "layer-concat"));  // no parameters
  CHECK(dict.contains(3, "classifier-16"));
  train_child(decode("node:mlp,gat;skip:0;layer:lstm"), task, quick_child(), make_rng({1}), make_rng({2}), &dict);
  CHECK(dict.contains(2, "layer-lstm"));
  CHECK(snapshot({dict.get(0, "gcn")->at("weight")}) == snapshot({r.model.layers[0].at("weight")}));

  // A new genotype reusing gcn at layer 0 starts from the stored weights.
  ChildConfig none = quick_child();
  none.max_epochs = 0;
  auto reused = train_child(decode("node:gcn,mlp;skip:0;layer:max"), task, none, make_rng({9}), make_rng({9}), &dict);
  CHECK(snapshot({reused.model.layers[0].at("weight")}) == snapshot({r.model.layers[0].at("weight")}));
  CHECK(dict.contains(1, "mlp"));
  CHECK(dict.contains(3, "classifier-8"));
}

TEST_CASE("search trace contract") {
  Dataset ds = sbm_dataset({.blocks = 2, .nodes_per_block = 15, .p_in = 0.4, .p_out = 0.05});
  TaskData task(ds);
  SearchConfig cfg;
  cfg.space = small_space();
  cfg.child = quick_child();
  cfg.budget = 6;
  auto res = search(cfg, task, 3);
  REQUIRE(res.trace.size() == 6);
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    CHECK(res.trace[i].iter == i);
    if (i) CHECK(res.trace[i].seconds >= res.trace[i - 1].seconds);
    CHECK(contains(cfg.space, decode(res.trace[i].genotype)));
  }
  cfg.budget = 1;
  CHECK(search(cfg, task, 3).trace.size() == 1);
  cfg.budget = 0;
  CHECK_THROWS_AS(search(cfg, task, 3), InputError);
}

TEST_CASE("with budget 1 shared and unshared search agree") {
  Dataset ds = sbm_dataset({.blocks = 2, .nodes_per_block = 15, .p_in = 0.4, .p_out = 0.05});
  TaskData task(ds);
  SearchConfig cfg;
  cfg.space = small_space();
  cfg.child = quick_child();
  cfg.child.dropout = 0.2;
  cfg.budget = 1;
  auto a = search(cfg, task, 8);
  cfg.weight_sharing = true;
  auto b = search(cfg, task, 8);
  CHECK(a.trace[0].genotype == b.trace[0].genotype);
  CHECK(a.trace[0].val_metric == b.trace[0].val_metric);
  CHECK(a.trace[0].baseline == b.trace[0].baseline);
  CHECK(snapshot(a.controller->parameters()) == snapshot(b.controller->parameters()));
}

TEST_CASE("derivation samples n genotypes and keeps the best") {
  Dataset ds = sbm_dataset({.blocks = 2, .nodes_per_block = 12, .p_in = 0.4, .p_out = 0.05});
  TaskData task(ds);
  SearchConfig cfg;
  cfg.space = small_space();
  cfg.child = quick_child();
  cfg.child.max_epochs = 5;
  cfg.grid_hidden = {4, 8};
  Controller ctl(cfg.space, cfg.controller, 0);
  CHECK(cfg.derive_n == 10);
  auto rep = derive(ctl, cfg, task, 0);
  CHECK(rep.candidates.size() == 10);
  for (const auto& c : rep.candidates) {
    CHECK(c.grid.size() == 6);
    CHECK(c.grid[c.best].val_metric <= rep.val_metric);
  }
  CHECK(rep.genotype == rep.candidates[rep.chosen].genotype);
  cfg.derive_n = 1;
  CHECK(derive(ctl, cfg, task, 0).candidates.size() == 1);
}

TEST_CASE("random search: record count, exhaustive argmax, seed sensitivity") {
  Dataset ds = sbm_dataset({.blocks = 2, .nodes_per_block = 12, .p_in = 0.4, .p_out = 0.1, .feature_noise = 1.0});
  TaskData task(ds);
  SearchConfig cfg;
  cfg.space = small_space();
  cfg.child = quick_child();
  cfg.child.max_epochs = 15;
  cfg.budget = 5;
  CHECK(random_search(cfg, task, 0).trace.size() == 5);

  cfg.budget = 24;
  cfg.dedup = true;
  auto res = random_search(cfg, task, 1);
  std::set<std::string> seen;
  double best = -1;
  for (const auto& r : res.trace) {
    seen.insert(r.genotype);
    best = std::max(best, r.val_metric);
  }
  CHECK(seen.size() == 24);
  double oracle = -1;
  for (const auto& g : enumerate(cfg.space)) {
    oracle = std::max(oracle, train_random_candidate(g, task, cfg.child, 1).val_metric);
  }
  CHECK(best == oracle);

  cfg.dedup = false;
  cfg.budget = 8;
  auto x = random_search(cfg, task, 10), y = random_search(cfg, task, 11);
  bool differ = false;
  for (std::size_t i = 0; i < 8; ++i) differ |= x.trace[i].genotype != y.trace[i].genotype;
  CHECK(differ);
}

TEST_CASE("trace CSV round trip") {
  std::vector<TraceRecord> t{{0, 0.5, "node:gcn;skip:;layer:max", 0.75, 0.0375},
                             {1, 1.25, "node:mlp;skip:;layer:concat", 1.0 / 3.0, 0.1}};
  auto path = std::filesystem::temp_directory_path() / "snag_trace_test.csv";
  write_trace_csv(t, path);
  auto back = read_trace_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].val_metric == t[1].val_metric);
  CHECK(back[1].seconds == t[1].seconds);
  CHECK(back[0].genotype == t[0].genotype);
}

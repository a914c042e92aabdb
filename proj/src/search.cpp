#include "snag/search.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace snag {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

TraceRecord record(std::size_t iter, Clock::time_point t0, const Genotype& g, const ChildResult& r, double b) {
  TraceRecord rec;
  rec.iter = iter;
  rec.seconds = since(t0);
  rec.genotype = encode(g);
  rec.val_metric = r.val_metric;
  rec.baseline = b;
  rec.train_seconds = r.seconds;
  rec.epochs = r.epochs;
  rec.diverged = r.diverged;
  return rec;
}

ChildResult train_indexed(const Genotype& g, const TaskData& task, const ChildConfig& child, std::uint64_t seed,
                          std::uint64_t index, ParamDict* shared) {
  return train_child(g, task, child, make_rng({seed, stream::kChildInit, index}),
                     make_rng({seed, stream::kDropout, index}), shared);
}

}  // namespace

SearchResult search(const SearchConfig& cfg, const TaskData& task, std::uint64_t seed) {
  if (cfg.budget == 0) throw InputError("search budget must be at least 1");
  SearchResult res;
  res.controller.emplace(cfg.space, cfg.controller, seed);
  Controller& ctl = *res.controller;
  Rng rng = make_rng({seed, stream::kController});
  ParamDict dict;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < cfg.budget; ++i) {
    const ControllerSample s = ctl.sample(rng);
    const ChildResult r = train_indexed(s.genotype, task, cfg.child, seed, i, cfg.weight_sharing ? &dict : nullptr);
    const Episode ep{s.genotype, r.val_metric};
    ctl.reinforce_update(std::span<const Episode>(&ep, 1));
    res.trace.push_back(record(i, t0, s.genotype, r, ctl.baseline()));
  }
  return res;
}

ChildResult train_random_candidate(const Genotype& g, const TaskData& task, const ChildConfig& child,
                                   std::uint64_t seed) {
  const std::uint64_t key = genotype_key(g);
  return train_child(g, task, child, make_rng({seed, stream::kRandomSearch, key, 0}),
                     make_rng({seed, stream::kRandomSearch, key, 1}));
}

SearchResult random_search(const SearchConfig& cfg, const TaskData& task, std::uint64_t seed) {
  if (cfg.budget == 0) throw InputError("search budget must be at least 1");
  SearchResult res;
  Rng rng = make_rng({seed, stream::kRandomSearch});
  const std::uint64_t size = space_size(cfg.space);
  std::set<std::string> seen;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < cfg.budget; ++i) {
    Genotype g = sample_uniform(cfg.space, rng);
    if (cfg.dedup) {
      if (seen.size() == size) break;
      while (seen.count(encode(g))) g = sample_uniform(cfg.space, rng);
      seen.insert(encode(g));
    }
    const ChildResult r = train_random_candidate(g, task, cfg.child, seed);
    res.trace.push_back(record(i, t0, g, r, 0.0));
  }
  return res;
}

std::uint64_t genotype_key(const Genotype& g) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : encode(g)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<Genotype> top_from_trace(const std::vector<TraceRecord>& trace, std::size_t n) {
  std::vector<const TraceRecord*> order;
  for (const auto& r : trace) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const TraceRecord* a, const TraceRecord* b) { return a->val_metric > b->val_metric; });
  std::vector<Genotype> out;
  std::set<std::string> taken;
  for (const auto* r : order) {
    if (out.size() == n) break;
    if (taken.insert(r->genotype).second) out.push_back(decode(r->genotype));
  }
  return out;
}

DeriveReport retrain_and_select(const std::vector<Genotype>& genotypes, const SearchConfig& cfg,
                                const TaskData& task, std::uint64_t seed) {
  if (genotypes.empty()) throw std::invalid_argument("derivation needs at least one genotype");
  if (cfg.grid_lr.empty() || cfg.grid_hidden.empty()) throw InputError("derivation grid must be non-empty");
  DeriveReport rep;
  double best_val = -1.0;
  for (std::size_t c = 0; c < genotypes.size(); ++c) {
    DeriveCandidate cand;
    cand.genotype = encode(genotypes[c]);
    double cand_best = -1.0;
    std::size_t cell = 0;
    for (double lr : cfg.grid_lr) {
      for (std::size_t hidden : cfg.grid_hidden) {
        ChildConfig child = cfg.child;
        child.lr = lr;
        child.hidden = hidden;
        const ChildResult r = train_child(genotypes[c], task, child, make_rng({seed, stream::kDerive, c, cell, 0}),
                                          make_rng({seed, stream::kDerive, c, cell, 1}));
        cand.grid.push_back({lr, hidden, r.val_metric, r.test_metric, r.diverged});
        if (r.val_metric > cand_best) {
          cand_best = r.val_metric;
          cand.best = cell;
        }
        ++cell;
      }
    }
    if (cand_best > best_val) {
      best_val = cand_best;
      rep.chosen = c;
    }
    rep.candidates.push_back(std::move(cand));
  }
  const auto& win = rep.candidates[rep.chosen];
  rep.genotype = win.genotype;
  rep.val_metric = win.grid[win.best].val_metric;
  rep.test_metric = win.grid[win.best].test_metric;
  return rep;
}

DeriveReport derive(const Controller& controller, const SearchConfig& cfg, const TaskData& task,
                    std::uint64_t seed) {
  Rng rng = make_rng({seed, stream::kDerive});
  std::vector<Genotype> gs;
  for (std::size_t i = 0; i < cfg.derive_n; ++i) gs.push_back(controller.sample(rng).genotype);
  return retrain_and_select(gs, cfg, task, seed);
}

void write_trace_csv(const std::vector<TraceRecord>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iter,seconds,genotype,val_metric,baseline\n" << std::setprecision(17);
  for (const auto& r : trace) {
    out << r.iter << ',' << r.seconds << ",\"" << r.genotype << "\"," << r.val_metric << ',' << r.baseline << '\n';
  }
}

std::vector<TraceRecord> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing file: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "iter,seconds,genotype,val_metric,baseline") throw InputError(path.string() + ":1: unexpected header");
  std::vector<TraceRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    // The genotype field is quoted since it contains commas.
    std::string f[5];
    std::size_t k = 0;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      else if (ch == ',' && !quoted && k < 4) ++k;
      else f[k] += ch;
    }
    try {
      TraceRecord r;
      r.iter = std::stoul(f[0]);
      r.seconds = std::stod(f[1]);
      r.genotype = f[2];
      r.val_metric = std::stod(f[3]);
      r.baseline = std::stod(f[4]);
      out.push_back(r);
    } catch (const std::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json to_json(const DeriveReport& r) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : r.candidates) {
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& g : c.grid) {
      grid.push_back({{"lr", g.lr}, {"hidden", g.hidden}, {"val_metric", g.val_metric},
                      {"test_metric", g.test_metric}, {"diverged", g.diverged}});
    }
    cands.push_back({{"genotype", c.genotype}, {"best", c.best}, {"grid", grid}});
  }
  return {{"genotype", r.genotype}, {"val_metric", r.val_metric}, {"test_metric", r.test_metric},
          {"chosen", r.chosen}, {"candidates", cands}};
}

}  // namespace snag

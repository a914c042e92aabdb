#include "snag/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

namespace snag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "dataset",       "sbm_blocks",        "sbm_nodes_per_block", "sbm_p_in",       "sbm_p_out",
      "sbm_noise",     "sbm_extra_dims",    "sbm_seed",            "task",           "row_normalize",
      "split_seed",    "layers",            "node_aggs",           "layer_aggs",     "layer_aggregation",
      "mode",          "budget",            "seeds",               "dedup",          "lr",
      "weight_decay",  "hidden",            "dropout",             "max_epochs",     "patience",
      "controller_lr", "controller_hidden", "controller_embed",    "entropy_weight", "baseline_decay",
      "derive_n",      "grid_lr",           "grid_hidden",         "out",            "enum_cap"};
  return keys;
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("config key '") + key + "' has the wrong type");
  }
}

template <typename T>
void read(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = get<T>(j, key);
}

double positive(double v, const char* key) {
  if (!(v > 0.0)) throw InputError(std::string("config key '") + key + "' must be positive");
  return v;
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().count(key)) throw InputError("unknown config key '" + key + "'");
  }
  ExperimentConfig cfg;

  bool any_sbm = false;
  SbmConfig sbm;
  for (const char* k : {"sbm_blocks", "sbm_nodes_per_block", "sbm_p_in", "sbm_p_out", "sbm_noise",
                        "sbm_extra_dims", "sbm_seed"}) {
    any_sbm |= j.contains(k);
  }
  read(j, "sbm_blocks", sbm.blocks);
  read(j, "sbm_nodes_per_block", sbm.nodes_per_block);
  read(j, "sbm_p_in", sbm.p_in);
  read(j, "sbm_p_out", sbm.p_out);
  read(j, "sbm_noise", sbm.feature_noise);
  read(j, "sbm_extra_dims", sbm.extra_dims);
  read(j, "sbm_seed", sbm.seed);
  if (j.contains("dataset")) {
    if (any_sbm) throw InputError("config sets both 'dataset' and sbm_* keys");
    fs::path p = get<std::string>(j, "dataset");
    if (p.is_relative()) p = base_dir / p;
    if (!fs::exists(p)) throw InputError("missing file: " + p.string());
    cfg.dataset = p;
  } else if (any_sbm) {
    if (sbm.blocks == 0 || sbm.nodes_per_block == 0) throw InputError("sbm needs at least one block and node");
    if (!(sbm.p_out >= 0.0 && sbm.p_out < sbm.p_in && sbm.p_in <= 1.0)) {
      throw InputError("sbm probabilities need 0 <= p_out < p_in <= 1");
    }
    cfg.sbm = sbm;
  } else {
    throw InputError("config needs 'dataset' or sbm_* keys");
  }

  if (j.contains("task")) {
    try {
      cfg.task = task_from_string(get<std::string>(j, "task"));
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  }
  read(j, "row_normalize", cfg.row_normalize);
  if (j.contains("split_seed")) cfg.split_seed = get<std::uint64_t>(j, "split_seed");

  auto& space = cfg.search.space;
  read(j, "layers", space.layers);
  try {
    if (j.contains("node_aggs")) {
      space.node_aggs.clear();
      for (const auto& id : get<std::vector<std::string>>(j, "node_aggs")) {
        space.node_aggs.push_back(node_aggregator_from_string(id));
      }
    }
    if (j.contains("layer_aggs")) {
      space.layer_aggs.clear();
      for (const auto& id : get<std::vector<std::string>>(j, "layer_aggs")) {
        space.layer_aggs.push_back(layer_aggregator_from_string(id));
      }
    }
    read(j, "layer_aggregation", space.layer_aggregation);
    space = canonicalize(space);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  read(j, "mode", cfg.mode);
  if (cfg.mode != "snag" && cfg.mode != "snag-ws" && cfg.mode != "random" && !cfg.mode.starts_with("fixed:")) {
    throw InputError("unknown mode '" + cfg.mode + "' (expected snag, snag-ws, random or fixed:<genotype>)");
  }
  read(j, "budget", cfg.search.budget);
  if (cfg.search.budget == 0) throw InputError("budget must be at least 1");
  read(j, "seeds", cfg.seeds);
  if (cfg.seeds.empty()) throw InputError("seeds must be non-empty");
  read(j, "dedup", cfg.search.dedup);

  auto& child = cfg.search.child;
  read(j, "lr", child.lr);
  positive(child.lr, "lr");
  read(j, "weight_decay", child.weight_decay);
  if (child.weight_decay < 0) throw InputError("weight_decay must be non-negative");
  read(j, "hidden", child.hidden);
  if (child.hidden == 0) throw InputError("hidden must be positive");
  read(j, "dropout", child.dropout);
  if (!(child.dropout >= 0.0 && child.dropout < 1.0)) throw InputError("dropout must be in [0, 1)");
  read(j, "max_epochs", child.max_epochs);
  read(j, "patience", child.patience);

  auto& ctl = cfg.search.controller;
  read(j, "controller_lr", ctl.lr);
  positive(ctl.lr, "controller_lr");
  read(j, "controller_hidden", ctl.hidden);
  read(j, "controller_embed", ctl.embed);
  if (ctl.hidden == 0 || ctl.embed == 0) throw InputError("controller sizes must be positive");
  read(j, "entropy_weight", ctl.entropy_weight);
  read(j, "baseline_decay", ctl.baseline_decay);
  if (!(ctl.baseline_decay >= 0.0 && ctl.baseline_decay < 1.0)) throw InputError("baseline_decay must be in [0, 1)");

  read(j, "derive_n", cfg.search.derive_n);
  if (cfg.search.derive_n == 0) throw InputError("derive_n must be at least 1");
  read(j, "grid_lr", cfg.search.grid_lr);
  read(j, "grid_hidden", cfg.search.grid_hidden);
  if (cfg.search.grid_lr.empty() || cfg.search.grid_hidden.empty()) throw InputError("tuning grid must be non-empty");
  for (double lr : cfg.search.grid_lr) positive(lr, "grid_lr");
  for (auto h : cfg.search.grid_hidden) {
    if (h == 0) throw InputError("grid_hidden entries must be positive");
  }

  if (j.contains("out")) {
    fs::path p = get<std::string>(j, "out");
    cfg.out = p.is_relative() ? base_dir / p : p;
  }
  read(j, "enum_cap", cfg.enum_cap);

  if (cfg.mode.starts_with("fixed:")) {
    const Genotype g = *fixed_genotype(cfg);
    if (g.layers() != space.layers) throw InputError("fixed genotype has a different layer count than 'layers'");
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::optional<Genotype> fixed_genotype(const ExperimentConfig& cfg) {
  if (!cfg.mode.starts_with("fixed:")) return std::nullopt;
  const std::string spec = cfg.mode.substr(6);
  if (spec.starts_with("node:")) return decode(spec);
  return baseline_genotype(spec, cfg.search.space.layers);
}

Genotype ablate_genotype(Genotype g) {
  g.skips.assign(g.skips.size(), false);
  g.layer_agg.reset();
  return g;
}

Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::uint64_t split_seed = cfg.split_seed.value_or(seed);
  Dataset ds;
  if (cfg.sbm) {
    // Noisy SBM features can be negative, so row normalization does not apply.
    ds = single_graph_dataset("sbm", make_splits(sbm_generate(*cfg.sbm), {}, split_seed));
  } else {
    LoadOptions opts;
    opts.row_normalize = cfg.row_normalize;
    opts.split_seed = split_seed;
    ds = load_dataset(*cfg.dataset, opts);
  }
  if (cfg.task && *cfg.task != ds.task) {
    throw InputError("config task '" + std::string(to_string(*cfg.task)) + "' does not match dataset task '" +
                     std::string(to_string(ds.task)) + "'");
  }
  return ds;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  RunReport rep;
  rep.mode = cfg.mode;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> tests;
  for (std::uint64_t seed : cfg.seeds) {
    const auto ts = std::chrono::steady_clock::now();
    const Dataset ds = build_dataset(cfg, seed);
    const TaskData task(ds);
    rep.metric = task.metric_kind() == MetricKind::kAccuracy ? "accuracy" : "micro_f1";
    SeedRun run;
    run.seed = seed;
    if (auto fixed = fixed_genotype(cfg)) {
      Genotype g = cfg.search.space.layer_aggregation ? *fixed : ablate_genotype(*fixed);
      const ChildResult r = train_child(g, task, cfg.search.child, make_rng({seed, stream::kChildInit, 0}),
                                        make_rng({seed, stream::kDropout, 0}));
      TraceRecord rec;
      rec.genotype = encode(g);
      rec.val_metric = r.val_metric;
      rec.seconds = r.seconds;
      rec.train_seconds = r.seconds;
      rec.epochs = r.epochs;
      rec.diverged = r.diverged;
      run.trace.push_back(rec);
      run.genotype = rec.genotype;
      run.val_metric = r.val_metric;
      run.test_metric = r.test_metric;
    } else {
      SearchConfig sc = cfg.search;
      sc.weight_sharing = cfg.mode == "snag-ws";
      DeriveReport d;
      if (cfg.mode == "random") {
        SearchResult sr = random_search(sc, task, seed);
        run.trace = std::move(sr.trace);
        d = retrain_and_select(top_from_trace(run.trace, sc.derive_n), sc, task, seed);
      } else {
        SearchResult sr = search(sc, task, seed);
        run.trace = std::move(sr.trace);
        d = derive(*sr.controller, sc, task, seed);
      }
      run.genotype = d.genotype;
      run.val_metric = d.val_metric;
      run.test_metric = d.test_metric;
      run.derivation = std::move(d);
    }
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - ts).count();
    std::cerr << "seed " << seed << ": " << run.genotype << " val " << run.val_metric << " test " << run.test_metric
              << '\n';
    tests.push_back(run.test_metric);
    rep.runs.push_back(std::move(run));
  }
  double sum = 0.0;
  for (double t : tests) sum += t;
  rep.mean = sum / static_cast<double>(tests.size());
  rep.std = sample_std(tests, rep.mean);
  rep.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

json to_json(const RunReport& r) {
  json runs = json::array();
  for (const auto& s : r.runs) {
    json e{{"seed", s.seed},
           {"genotype", s.genotype},
           {"val_metric", s.val_metric},
           {"test_metric", s.test_metric},
           {"seconds", s.seconds},
           {"trace", "trace_seed" + std::to_string(s.seed) + ".csv"}};
    if (s.derivation) e["derivation"] = "derive_seed" + std::to_string(s.seed) + ".json";
    runs.push_back(std::move(e));
  }
  return {{"mode", r.mode}, {"metric", r.metric}, {"runs", runs},
          {"mean", r.mean}, {"std", r.std},       {"total_seconds", r.total_seconds}};
}

namespace {

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void write_run(const RunReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& s : report.runs) {
    write_trace_csv(s.trace, dir / ("trace_seed" + std::to_string(s.seed) + ".csv"));
    if (s.derivation) write_json(to_json(*s.derivation), dir / ("derive_seed" + std::to_string(s.seed) + ".json"));
  }
  write_json(to_json(report), dir / "report.json");
}

AblationReport run_ablation(const ExperimentConfig& cfg) {
  ExperimentConfig with = cfg, without = cfg;
  with.search.space.layer_aggregation = true;
  without.search.space.layer_aggregation = false;
  return {run_experiment(with), run_experiment(without)};
}

void cmd_run(const ExperimentConfig& cfg) { write_run(run_experiment(cfg), cfg.out); }

void cmd_ablate(const ExperimentConfig& cfg) {
  const AblationReport a = run_ablation(cfg);
  write_run(a.with, cfg.out / "with");
  write_run(a.without, cfg.out / "without");
  write_json({{"with", to_json(a.with)}, {"without", to_json(a.without)}}, cfg.out / "ablation.json");
}

void cmd_enumerate(const ExperimentConfig& cfg, std::ostream& out) {
  std::uint64_t count = 0;
  for_each_genotype(
      cfg.search.space,
      [&](const Genotype& g) {
        out << encode(g) << '\n';
        ++count;
      },
      cfg.enum_cap);
  out << "count " << count << '\n';
}

void cmd_convert(const std::string& format, const fs::path& input, const fs::path& out, const std::string& name) {
  Dataset ds;
  if (format == "edgelist") ds = convert_edgelist(input, name);
  else if (format == "linqs") ds = convert_linqs(input, name);
  else throw InputError("unknown input format '" + format + "' (expected edgelist or linqs)");
  save_dataset(ds, out);
  LoadOptions opts;
  opts.row_normalize = false;
  const Dataset back = load_dataset(out, opts);
  const Graph& a = ds.graphs.front();
  const Graph& b = back.graphs.front();
  if (back.graphs.size() != ds.graphs.size() || a.num_nodes != b.num_nodes || a.targets != b.targets ||
      back.num_features != ds.num_features || back.num_classes != ds.num_classes) {
    throw std::runtime_error("converted dataset does not load back with the same counts");
  }
}

}  // namespace snag

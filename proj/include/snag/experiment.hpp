#pragma once

// Experiment configs, the four run modes and the reports they produce.
//
// Config: one flat JSON object. Keys (all optional except a data source):
//   dataset            canonical dataset directory (relative to the config)
//   sbm_blocks, sbm_nodes_per_block, sbm_p_in, sbm_p_out, sbm_noise,
//   sbm_extra_dims, sbm_seed
//                      synthetic graph instead of a dataset
//   task               transductive | inductive (checked against the data)
//   row_normalize      bool, default true
//   split_seed         fixed split for every run; default: split per run seed
//   layers, node_aggs, layer_aggs, layer_aggregation
//   mode               snag | snag-ws | random | fixed:<baseline or genotype>
//   budget, seeds, dedup
//   lr, weight_decay, hidden, dropout, max_epochs, patience
//   controller_lr, controller_hidden, controller_embed, entropy_weight,
//   baseline_decay
//   derive_n, grid_lr, grid_hidden
//   out, enum_cap
// Unknown keys are rejected.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snag/dataset.hpp"
#include "snag/search.hpp"

namespace snag {

struct ExperimentConfig {
  std::optional<std::filesystem::path> dataset;
  std::optional<SbmConfig> sbm;
  std::optional<TaskKind> task;
  bool row_normalize = true;
  std::optional<std::uint64_t> split_seed;
  std::string mode = "snag";
  SearchConfig search;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out = "out";
  std::uint64_t enum_cap = 1'000'000;
};

// Throws InputError on unknown keys, wrong types, bad values or missing
// paths. Relative paths resolve against base_dir.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

// Fixed-mode genotype: a baseline name or a genotype string.
std::optional<Genotype> fixed_genotype(const ExperimentConfig& cfg);

// Drops layer aggregation from a genotype: skips ZERO, last layer only.
Genotype ablate_genotype(Genotype g);

// The dataset a run with this seed trains on.
Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  std::string genotype;
  double val_metric = 0.0;
  double test_metric = 0.0;
  double seconds = 0.0;
  std::vector<TraceRecord> trace;
  std::optional<DeriveReport> derivation;
};

struct RunReport {
  std::string mode;
  std::string metric;
  std::vector<SeedRun> runs;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
  double total_seconds = 0.0;
};

RunReport run_experiment(const ExperimentConfig& cfg);
// Writes trace_seed<s>.csv, derive_seed<s>.json and report.json into dir.
void write_run(const RunReport& report, const std::filesystem::path& dir);
nlohmann::json to_json(const RunReport& r);

// Same config with layer aggregation on ("with") and off ("without").
struct AblationReport {
  RunReport with;
  RunReport without;
};
AblationReport run_ablation(const ExperimentConfig& cfg);

// Command entry points used by the CLI. Each returns the process exit code
// contract through exceptions: InputError for validation failures.
void cmd_run(const ExperimentConfig& cfg);
void cmd_ablate(const ExperimentConfig& cfg);
void cmd_enumerate(const ExperimentConfig& cfg, std::ostream& out);
void cmd_convert(const std::string& format, const std::filesystem::path& input, const std::filesystem::path& out,
                 const std::string& name);

}  // namespace snag

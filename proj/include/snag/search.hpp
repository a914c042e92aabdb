#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snag/controller.hpp"
#include "snag/trainer.hpp"

namespace snag {

struct SearchConfig {
  SearchSpaceConfig space;
  ChildConfig child;
  ControllerConfig controller;
  std::size_t budget = 200;
  bool weight_sharing = false;
  bool dedup = false;  // random search only: never revisit a genotype
  std::size_t derive_n = 10;
  std::vector<double> grid_lr{0.01, 0.005, 0.001};
  std::vector<std::size_t> grid_hidden{32, 64};
};

struct TraceRecord {
  std::size_t iter = 0;
  double seconds = 0.0;  // elapsed since the search started
  std::string genotype;
  double val_metric = 0.0;
  double baseline = 0.0;
  // Not written to the CSV.
  double train_seconds = 0.0;
  std::size_t epochs = 0;
  bool diverged = false;
};

struct SearchResult {
  std::vector<TraceRecord> trace;
  std::optional<Controller> controller;  // absent for random search
};

// budget iterations of sample -> train_child -> reinforce_update. Child i
// draws its init and dropout streams from (seed, i), so with budget 1 the
// shared and unshared variants train the same network.
SearchResult search(const SearchConfig& cfg, const TaskData& task, std::uint64_t seed);
// Candidates train through train_random_candidate, so a genotype scores the
// same wherever it appears in the sequence.
SearchResult random_search(const SearchConfig& cfg, const TaskData& task, std::uint64_t seed);
ChildResult train_random_candidate(const Genotype& g, const TaskData& task, const ChildConfig& child,
                                   std::uint64_t seed);

struct GridResult {
  double lr = 0.0;
  std::size_t hidden = 0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  bool diverged = false;
};

struct DeriveCandidate {
  std::string genotype;
  std::vector<GridResult> grid;
  std::size_t best = 0;  // index into grid
};

struct DeriveReport {
  std::vector<DeriveCandidate> candidates;
  std::size_t chosen = 0;
  std::string genotype;
  double val_metric = 0.0;
  double test_metric = 0.0;
};

// Retrains each genotype from scratch over the lr x hidden grid and keeps
// the best validation performer (first one on ties).
DeriveReport retrain_and_select(const std::vector<Genotype>& genotypes, const SearchConfig& cfg,
                                const TaskData& task, std::uint64_t seed);
// Samples derive_n genotypes from the controller, then retrain_and_select.
DeriveReport derive(const Controller& controller, const SearchConfig& cfg, const TaskData& task,
                    std::uint64_t seed);
// The derive_n distinct best-validation genotypes of a trace.
std::vector<Genotype> top_from_trace(const std::vector<TraceRecord>& trace, std::size_t n);

// FNV-1a of the encoded genotype.
std::uint64_t genotype_key(const Genotype& g);

void write_trace_csv(const std::vector<TraceRecord>& trace, const std::filesystem::path& path);
std::vector<TraceRecord> read_trace_csv(const std::filesystem::path& path);
nlohmann::json to_json(const DeriveReport& r);

}  // namespace snag

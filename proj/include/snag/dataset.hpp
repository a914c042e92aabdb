#pragma once

// Canonical on-disk dataset directory:
//
//   manifest.json  name, task, undirected, multilabel, num_nodes,
//                  num_features, num_classes, file names (below); inductive
//                  datasets list per-graph entries under "graphs".
//   edges.txt      two whitespace-separated 0-based node ids per line
//                  (each line one undirected pair when "undirected" is true)
//   features.csv   one comma-separated row of decimals per node
//   labels.txt     one integer per line, or one row of 0/1 flags
//                  (comma or space separated) per node when multilabel
//   splits.txt     optional; one of train/val/test/none per line

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "snag/graph.hpp"

namespace snag {

struct GraphFiles {
  std::string role;  // inductive only: train | val | test
  std::size_t num_nodes = 0;
  std::string edges;
  std::string features;
  std::string labels;
  std::string splits;  // optional
};

struct DatasetManifest {
  std::string name;
  TaskKind task = TaskKind::kTransductive;
  bool undirected = true;
  bool multilabel = false;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::optional<std::size_t> num_edges;  // transductive, undirected pairs or directed entries
  std::vector<GraphFiles> graphs;        // exactly one for transductive datasets
};

struct LoadOptions {
  bool row_normalize = true;
  // Applied when a transductive manifest ships no splits file.
  SplitFractions fractions;
  std::uint64_t split_seed = 0;
};

// Reads and validates manifest.json (or the given file). Throws InputError.
DatasetManifest read_manifest(const std::filesystem::path& path);

// Loads and validates every graph named by the manifest. Count mismatches
// and dangling edge endpoints raise InputError naming expected and actual
// values.
Dataset load_dataset(const std::filesystem::path& dir_or_manifest, const LoadOptions& options = {});

// Writes the canonical layout (features at full round-trip precision) and
// returns the manifest written. Masks are stored in splits.txt.
DatasetManifest save_dataset(const Dataset& ds, const std::filesystem::path& dir);

// Input formats accepted by `snag convert`.
//   edgelist: directory with edges.txt, features.csv, labels.txt where
//             labels.txt may hold arbitrary class names (mapped to ids in
//             sorted order).
//   linqs:    directory with <name>.content and <name>.cites (Cora/CiteSeer
//             distribution format: id, features..., label / cited citing).
Dataset convert_edgelist(const std::filesystem::path& input_dir, const std::string& name);
Dataset convert_linqs(const std::filesystem::path& input_dir, const std::string& name);

}  // namespace snag

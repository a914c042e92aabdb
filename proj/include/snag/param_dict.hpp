#pragma once

// Weight-sharing store: trained parameters of every op, keyed by
// (layer index, op name), loaded before and saved after each child run.

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "snag/gnn.hpp"

namespace snag {

class ParamDict {
 public:
  using Key = std::pair<std::size_t, std::string>;

  // Deep copy of the stored set, or nullopt when the key was never written.
  std::optional<ParamSet> get(std::size_t layer, const std::string& op) const;
  // Stores a deep copy. Throws std::invalid_argument if an entry already
  // exists under the key with different names or shapes.
  void put(std::size_t layer, const std::string& op, const ParamSet& params);

  bool contains(std::size_t layer, const std::string& op) const { return entries_.count({layer, op}) != 0; }
  std::size_t size() const { return entries_.size(); }
  const std::map<Key, ParamSet>& entries() const { return entries_; }

 private:
  std::map<Key, ParamSet> entries_;
};

// Keys used for a model: layer l's node aggregator lives at (l, id); the
// layer aggregator at (K, "layer-<id>"); the classifier at
// (K + 1, "classifier-<d_z>") so CONCAT readouts of different widths do not
// collide.
ParamDict::Key node_key(const Genotype& g, std::size_t layer);
ParamDict::Key layer_agg_key(const Genotype& g);
ParamDict::Key classifier_key(const GnnModel& m);

// Overwrites model parameters with stored entries where present; returns the
// number of entries loaded.
std::size_t load_shared(const ParamDict& dict, GnnModel& model);
void save_shared(ParamDict& dict, const GnnModel& model);

}  // namespace snag

#pragma once

// Points of the architecture search space and their string form.
//
// Grammar (lowercase hyphenated ids, bit i governs intermediate layer i):
//
//   node:<id>{,<id>}*;skip:<bits>;layer:<id>
//
// Genotypes from the ablated space (no layer aggregators) omit the layer
// section: node:<id>{,<id>}*;skip:<zeros>.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "snag/errors.hpp"
#include "snag/rng.hpp"

namespace snag {

enum class NodeAggregator : std::uint8_t {
  kGcn,
  kSageSum,
  kSageMean,
  kSageMax,
  kSageLstm,
  kMlp,
  kGat,
  kGatSym,
  kGatCos,
  kGatLinear,
  kGatGenLinear,
};

enum class LayerAggregator : std::uint8_t { kConcat, kMax, kLstm };

inline constexpr std::size_t kNumNodeAggregators = 11;
inline constexpr std::size_t kNumLayerAggregators = 3;

std::string_view to_string(NodeAggregator agg);
std::string_view to_string(LayerAggregator agg);
// Throw std::invalid_argument on unknown ids.
NodeAggregator node_aggregator_from_string(std::string_view id);
LayerAggregator layer_aggregator_from_string(std::string_view id);

// All values, sorted by id string. This is the canonical action order used
// by enumeration, sampling and the controller heads.
const std::array<NodeAggregator, kNumNodeAggregators>& all_node_aggregators();
const std::array<LayerAggregator, kNumLayerAggregators>& all_layer_aggregators();

struct Genotype {
  std::vector<NodeAggregator> node_aggs;
  std::vector<bool> skips;                   // size K-1; true = IDENTITY
  std::optional<LayerAggregator> layer_agg;  // nullopt: last layer only

  std::size_t layers() const { return node_aggs.size(); }
  bool operator==(const Genotype&) const = default;
};

class GenotypeParseError : public InputError {
 public:
  GenotypeParseError(const std::string& text, std::size_t position, const std::string& what);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

std::string encode(const Genotype& g);
Genotype decode(std::string_view text);

struct SearchSpaceConfig {
  std::size_t layers = 3;
  std::vector<NodeAggregator> node_aggs{all_node_aggregators().begin(), all_node_aggregators().end()};
  std::vector<LayerAggregator> layer_aggs{all_layer_aggregators().begin(), all_layer_aggregators().end()};
  // false: skips forced ZERO and the final representation is h^(K) alone.
  bool layer_aggregation = true;
};

// Sorts and dedupes the allowed sets into canonical order; throws
// std::invalid_argument on an empty set or zero layers.
SearchSpaceConfig canonicalize(SearchSpaceConfig cfg);

std::uint64_t space_size(const SearchSpaceConfig& cfg);

// Lexicographic order over the tuple (node ids, skip bits, layer id), ids
// compared as strings. This is also byte order of the encoded strings except
// where the last node id is a prefix of another ("gat;" sorts after
// "gat-cos"). Throws InputError when the space exceeds cap.
void for_each_genotype(const SearchSpaceConfig& cfg, const std::function<void(const Genotype&)>& fn,
                       std::uint64_t cap = 1'000'000);
std::vector<Genotype> enumerate(const SearchSpaceConfig& cfg, std::uint64_t cap = 1'000'000);

bool contains(const SearchSpaceConfig& cfg, const Genotype& g);
Genotype sample_uniform(const SearchSpaceConfig& cfg, Rng& rng);

// Human-designed models written as genotypes: GCN, GraphSAGE[-SUM|-MEAN|
// -MAX|-LSTM], GAT, GIN, each optionally suffixed -JK. Plain models use all
// skips ZERO with CONCAT (which then sees h^(K) only); JK models use all
// skips IDENTITY with CONCAT. GIN is sum aggregation plus the layer's linear
// transform. Throws InputError for unknown names.
Genotype baseline_genotype(std::string_view name, std::size_t layers = 3);
std::vector<std::string> baseline_names();

}  // namespace snag

template <>
struct std::hash<snag::Genotype> {
  std::size_t operator()(const snag::Genotype& g) const noexcept { return std::hash<std::string>{}(snag::encode(g)); }
};

#include "snag/genotype.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace snag {

namespace {

constexpr std::array<std::pair<NodeAggregator, std::string_view>, kNumNodeAggregators> kNodeIds{{
    {NodeAggregator::kGcn, "gcn"},
    {NodeAggregator::kSageSum, "sage-sum"},
    {NodeAggregator::kSageMean, "sage-mean"},
    {NodeAggregator::kSageMax, "sage-max"},
    {NodeAggregator::kSageLstm, "sage-lstm"},
    {NodeAggregator::kMlp, "mlp"},
    {NodeAggregator::kGat, "gat"},
    {NodeAggregator::kGatSym, "gat-sym"},
    {NodeAggregator::kGatCos, "gat-cos"},
    {NodeAggregator::kGatLinear, "gat-linear"},
    {NodeAggregator::kGatGenLinear, "gat-gen-linear"},
}};

constexpr std::array<std::pair<LayerAggregator, std::string_view>, kNumLayerAggregators> kLayerIds{{
    {LayerAggregator::kConcat, "concat"},
    {LayerAggregator::kMax, "max"},
    {LayerAggregator::kLstm, "lstm"},
}};

template <typename T, std::size_t N>
std::array<T, N> sorted_by_id(const std::array<std::pair<T, std::string_view>, N>& ids) {
  auto copy = ids;
  std::sort(copy.begin(), copy.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = copy[i].first;
  return out;
}

template <typename T>
void canonical_sort(std::vector<T>& v) {
  std::sort(v.begin(), v.end(), [](T a, T b) { return to_string(a) < to_string(b); });
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

template <typename T>
std::size_t position_in(const std::vector<T>& v, T x) {
  return static_cast<std::size_t>(std::find(v.begin(), v.end(), x) - v.begin());
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view to_string(NodeAggregator agg) {
  for (const auto& [k, id] : kNodeIds) {
    if (k == agg) return id;
  }
  return "unknown";
}

std::string_view to_string(LayerAggregator agg) {
  for (const auto& [k, id] : kLayerIds) {
    if (k == agg) return id;
  }
  return "unknown";
}

NodeAggregator node_aggregator_from_string(std::string_view id) {
  for (const auto& [k, s] : kNodeIds) {
    if (s == id) return k;
  }
  throw std::invalid_argument("unknown node aggregator '" + std::string(id) + "'");
}

LayerAggregator layer_aggregator_from_string(std::string_view id) {
  for (const auto& [k, s] : kLayerIds) {
    if (s == id) return k;
  }
  throw std::invalid_argument("unknown layer aggregator '" + std::string(id) + "'");
}

const std::array<NodeAggregator, kNumNodeAggregators>& all_node_aggregators() {
  static const auto sorted = sorted_by_id(kNodeIds);
  return sorted;
}

const std::array<LayerAggregator, kNumLayerAggregators>& all_layer_aggregators() {
  static const auto sorted = sorted_by_id(kLayerIds);
  return sorted;
}

GenotypeParseError::GenotypeParseError(const std::string& text, std::size_t position, const std::string& what)
    : InputError("malformed genotype '" + text + "' at position " + std::to_string(position) + ": " + what),
      position_(position) {}

std::string encode(const Genotype& g) {
  std::string s = "node:";
  for (std::size_t i = 0; i < g.node_aggs.size(); ++i) {
    if (i) s += ',';
    s += to_string(g.node_aggs[i]);
  }
  s += ";skip:";
  for (bool b : g.skips) s += b ? '1' : '0';
  if (g.layer_agg) {
    s += ";layer:";
    s += to_string(*g.layer_agg);
  }
  return s;
}

Genotype decode(std::string_view text) {
  const std::string full(text);
  std::size_t pos = 0;
  auto fail = [&](std::size_t at, const std::string& what) -> GenotypeParseError {
    return GenotypeParseError(full, at, what);
  };
  auto expect = [&](std::string_view lit) {
    if (text.substr(pos, lit.size()) != lit) throw fail(pos, "expected '" + std::string(lit) + "'");
    pos += lit.size();
  };
  auto read_id = [&]() {
    const std::size_t start = pos;
    while (pos < text.size() && (std::islower(static_cast<unsigned char>(text[pos])) || text[pos] == '-')) ++pos;
    if (pos == start) throw fail(start, "expected an operation id");
    return std::pair{text.substr(start, pos - start), start};
  };

  Genotype g;
  expect("node:");
  while (true) {
    auto [id, at] = read_id();
    try {
      g.node_aggs.push_back(node_aggregator_from_string(id));
    } catch (const std::invalid_argument& e) {
      throw fail(at, e.what());
    }
    if (pos < text.size() && text[pos] == ',') {
      ++pos;
      continue;
    }
    break;
  }
  expect(";skip:");
  const std::size_t bits_at = pos;
  while (pos < text.size() && (text[pos] == '0' || text[pos] == '1')) g.skips.push_back(text[pos++] == '1');
  if (g.skips.size() + 1 != g.node_aggs.size()) {
    throw fail(bits_at, "expected " + std::to_string(g.node_aggs.size() - 1) + " skip bits for " +
                            std::to_string(g.node_aggs.size()) + " layers, found " + std::to_string(g.skips.size()));
  }
  if (pos < text.size()) {
    expect(";layer:");
    auto [id, at] = read_id();
    try {
      g.layer_agg = layer_aggregator_from_string(id);
    } catch (const std::invalid_argument& e) {
      throw fail(at, e.what());
    }
  }
  if (pos != text.size()) throw fail(pos, "unexpected trailing characters");
  return g;
}

SearchSpaceConfig canonicalize(SearchSpaceConfig cfg) {
  if (cfg.layers == 0) throw std::invalid_argument("search space needs at least one layer");
  if (cfg.node_aggs.empty()) throw std::invalid_argument("search space needs at least one node aggregator");
  if (cfg.layer_aggregation && cfg.layer_aggs.empty()) {
    throw std::invalid_argument("search space needs at least one layer aggregator");
  }
  canonical_sort(cfg.node_aggs);
  canonical_sort(cfg.layer_aggs);
  return cfg;
}

std::uint64_t space_size(const SearchSpaceConfig& raw) {
  const SearchSpaceConfig cfg = canonicalize(raw);
  std::uint64_t n = 1;
  for (std::size_t l = 0; l < cfg.layers; ++l) n *= cfg.node_aggs.size();
  if (cfg.layer_aggregation) {
    n <<= (cfg.layers - 1);
    n *= cfg.layer_aggs.size();
  }
  return n;
}

void for_each_genotype(const SearchSpaceConfig& raw, const std::function<void(const Genotype&)>& fn,
                       std::uint64_t cap) {
  const SearchSpaceConfig cfg = canonicalize(raw);
  const std::uint64_t size = space_size(cfg);
  if (size > cap) {
    throw InputError("search space has " + std::to_string(size) + " genotypes, above the enumeration cap of " +
                     std::to_string(cap));
  }
  const std::size_t k = cfg.layers;
  const std::size_t skip_slots = cfg.layer_aggregation ? k - 1 : 0;
  const std::size_t layer_choices = cfg.layer_aggregation ? cfg.layer_aggs.size() : 1;

  // Odometer over digits: K node slots, K-1 skip slots, one layer slot;
  // the last digit turns fastest.
  std::vector<std::size_t> radix(k, cfg.node_aggs.size());
  radix.insert(radix.end(), skip_slots, 2);
  radix.push_back(layer_choices);
  std::vector<std::size_t> digit(radix.size(), 0);

  Genotype g;
  g.node_aggs.resize(k);
  g.skips.assign(k - 1, false);
  for (std::uint64_t count = 0; count < size; ++count) {
    for (std::size_t i = 0; i < k; ++i) g.node_aggs[i] = cfg.node_aggs[digit[i]];
    for (std::size_t i = 0; i < skip_slots; ++i) g.skips[i] = digit[k + i] == 1;
    if (cfg.layer_aggregation) g.layer_agg = cfg.layer_aggs[digit.back()];
    else g.layer_agg.reset();
    fn(g);
    for (std::size_t i = radix.size(); i-- > 0;) {
      if (++digit[i] < radix[i]) break;
      digit[i] = 0;
    }
  }
}

std::vector<Genotype> enumerate(const SearchSpaceConfig& cfg, std::uint64_t cap) {
  std::vector<Genotype> out;
  for_each_genotype(cfg, [&](const Genotype& g) { out.push_back(g); }, cap);
  return out;
}

bool contains(const SearchSpaceConfig& raw, const Genotype& g) {
  const SearchSpaceConfig cfg = canonicalize(raw);
  if (g.layers() != cfg.layers || g.skips.size() + 1 != g.layers()) return false;
  for (auto a : g.node_aggs) {
    if (position_in(cfg.node_aggs, a) == cfg.node_aggs.size()) return false;
  }
  if (!cfg.layer_aggregation) {
    return !g.layer_agg && std::none_of(g.skips.begin(), g.skips.end(), [](bool b) { return b; });
  }
  return g.layer_agg && position_in(cfg.layer_aggs, *g.layer_agg) != cfg.layer_aggs.size();
}

Genotype sample_uniform(const SearchSpaceConfig& raw, Rng& rng) {
  const SearchSpaceConfig cfg = canonicalize(raw);
  Genotype g;
  std::uniform_int_distribution<std::size_t> node(0, cfg.node_aggs.size() - 1);
  for (std::size_t l = 0; l < cfg.layers; ++l) g.node_aggs.push_back(cfg.node_aggs[node(rng)]);
  if (cfg.layer_aggregation) {
    std::bernoulli_distribution bit(0.5);
    for (std::size_t l = 0; l + 1 < cfg.layers; ++l) g.skips.push_back(bit(rng));
    std::uniform_int_distribution<std::size_t> layer(0, cfg.layer_aggs.size() - 1);
    g.layer_agg = cfg.layer_aggs[layer(rng)];
  } else {
    g.skips.assign(cfg.layers - 1, false);
  }
  return g;
}

Genotype baseline_genotype(std::string_view name, std::size_t layers) {
  if (layers == 0) throw InputError("baseline genotype needs at least one layer");
  std::string key = lower(name);
  bool jk = false;
  if (key.size() > 3 && key.ends_with("-jk")) {
    jk = true;
    key.resize(key.size() - 3);
  }
  NodeAggregator agg;
  if (key == "gcn") agg = NodeAggregator::kGcn;
  else if (key == "graphsage" || key == "graphsage-mean") agg = NodeAggregator::kSageMean;
  else if (key == "graphsage-sum") agg = NodeAggregator::kSageSum;
  else if (key == "graphsage-max") agg = NodeAggregator::kSageMax;
  else if (key == "graphsage-lstm") agg = NodeAggregator::kSageLstm;
  else if (key == "gat") agg = NodeAggregator::kGat;
  else if (key == "gin") agg = NodeAggregator::kSageSum;
  else if (key == "mlp") agg = NodeAggregator::kMlp;
  else throw InputError("unknown baseline model '" + std::string(name) + "'");

  Genotype g;
  g.node_aggs.assign(layers, agg);
  g.skips.assign(layers - 1, jk);
  g.layer_agg = LayerAggregator::kConcat;
  return g;
}

std::vector<std::string> baseline_names() {
  std::vector<std::string> base{"GCN", "GraphSAGE", "GraphSAGE-SUM", "GraphSAGE-MEAN", "GraphSAGE-MAX",
                                "GraphSAGE-LSTM", "GAT", "GIN"};
  std::vector<std::string> out;
  for (const auto& b : base) {
    out.push_back(b);
    out.push_back(b + "-JK");
  }
  return out;
}

}  // namespace snag

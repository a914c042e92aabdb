#include "snag/param_dict.hpp"

#include <stdexcept>

namespace snag {

namespace {

ParamSet deep_copy(const ParamSet& p) {
  ParamSet out;
  for (const auto& [name, t] : p) out.emplace(name, t.clone());
  return out;
}

}  // namespace

std::optional<ParamSet> ParamDict::get(std::size_t layer, const std::string& op) const {
  auto it = entries_.find({layer, op});
  if (it == entries_.end()) return std::nullopt;
  return deep_copy(it->second);
}

void ParamDict::put(std::size_t layer, const std::string& op, const ParamSet& params) {
  auto it = entries_.find({layer, op});
  if (it != entries_.end()) {
    const ParamSet& old = it->second;
    bool same = old.size() == params.size();
    for (auto a = old.begin(), b = params.begin(); same && a != old.end(); ++a, ++b) {
      same = a->first == b->first && a->second.shape() == b->second.shape();
    }
    if (!same) {
      throw std::invalid_argument("ParamDict::put: shapes for (" + std::to_string(layer) + ", " + op +
                                  ") differ from the stored entry");
    }
    it->second = deep_copy(params);
    return;
  }
  entries_.emplace(Key{layer, op}, deep_copy(params));
}

ParamDict::Key node_key(const Genotype& g, std::size_t layer) {
  return {layer, std::string(to_string(g.node_aggs.at(layer)))};
}

ParamDict::Key layer_agg_key(const Genotype& g) {
  return {g.layers(), g.layer_agg ? "layer-" + std::string(to_string(*g.layer_agg)) : std::string("layer-last")};
}

ParamDict::Key classifier_key(const GnnModel& m) {
  return {m.genotype.layers() + 1, "classifier-" + std::to_string(m.readout_dim())};
}

std::size_t load_shared(const ParamDict& dict, GnnModel& model) {
  std::size_t loaded = 0;
  auto load = [&](const ParamDict::Key& key, ParamSet& target) {
    if (target.empty()) return;
    if (auto p = dict.get(key.first, key.second)) {
      bool same = p->size() == target.size();
      for (auto a = p->begin(), b = target.begin(); same && a != p->end(); ++a, ++b) {
        same = a->first == b->first && a->second.shape() == b->second.shape();
      }
      if (!same) {
        throw std::invalid_argument("shared parameters for (" + std::to_string(key.first) + ", " + key.second +
                                    ") do not fit this model");
      }
      for (auto& [name, t] : *p) t.set_requires_grad(true);
      target = std::move(*p);
      ++loaded;
    }
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) load(node_key(model.genotype, l), model.layers[l]);
  load(layer_agg_key(model.genotype), model.layer_agg);
  load(classifier_key(model), model.classifier);
  return loaded;
}

void save_shared(ParamDict& dict, const GnnModel& model) {
  auto save = [&](const ParamDict::Key& key, const ParamSet& p) {
    if (!p.empty()) dict.put(key.first, key.second, p);
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) save(node_key(model.genotype, l), model.layers[l]);
  save(layer_agg_key(model.genotype), model.layer_agg);
  save(classifier_key(model), model.classifier);
}

}  // namespace snag

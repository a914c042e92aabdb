#include <stdexcept>

#include "snag/gnn.hpp"

namespace snag {

GnnModel GnnModel::create(const Genotype& genotype, ModelDims dims, Rng& rng) {
  if (genotype.layers() == 0) throw std::invalid_argument("model needs at least one layer");
  if (genotype.skips.size() + 1 != genotype.layers()) throw std::invalid_argument("skip bits do not match layers");
  if (dims.in_dim == 0 || dims.hidden == 0 || dims.num_classes == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  GnnModel m;
  m.genotype = genotype;
  m.dims = dims;
  for (std::size_t l = 0; l < genotype.layers(); ++l) {
    const std::size_t d_in = l == 0 ? dims.in_dim : dims.hidden;
    m.layers.push_back(init_params(node_aggregator_schema(genotype.node_aggs[l], d_in, dims.hidden), rng));
  }
  m.layer_agg = init_params(layer_aggregator_schema(genotype.layer_agg, dims.hidden), rng);
  m.classifier = init_params(classifier_schema(m.readout_dim(), dims.num_classes), rng);
  return m;
}

std::vector<std::size_t> GnnModel::selected_layers() const {
  std::vector<std::size_t> out;
  if (genotype.layer_agg) {
    for (std::size_t l = 0; l + 1 < genotype.layers(); ++l) {
      if (genotype.skips[l]) out.push_back(l);
    }
  }
  out.push_back(genotype.layers() - 1);
  return out;
}

std::size_t GnnModel::readout_dim() const {
  if (genotype.layer_agg == LayerAggregator::kConcat) return dims.hidden * selected_layers().size();
  return dims.hidden;
}

std::vector<Tensor> GnnModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers) {
    for (const auto& [name, t] : layer) out.push_back(t);
  }
  for (const auto& [name, t] : layer_agg) out.push_back(t);
  for (const auto& [name, t] : classifier) out.push_back(t);
  return out;
}

GnnModel GnnModel::clone() const {
  GnnModel m = *this;
  auto deep = [](ParamSet& p) {
    for (auto& [name, t] : p) t = t.clone();
  };
  for (auto& layer : m.layers) deep(layer);
  deep(m.layer_agg);
  deep(m.classifier);
  return m;
}

Tensor forward(Tape& tape, const GnnModel& model, const GraphContext& ctx, const ForwardOptions& opts) {
  const bool drop = opts.training && model.dropout > 0.0;
  if (drop && opts.dropout_rng == nullptr) throw std::invalid_argument("forward: dropout needs an rng");
  auto maybe_drop = [&](const Tensor& x) { return drop ? tape.dropout(x, model.dropout, *opts.dropout_rng, true) : x; };

  Tensor h = ctx.graph->features;
  if (h.cols() != model.dims.in_dim) {
    throw std::invalid_argument("forward: graph has " + std::to_string(h.cols()) + " features, model expects " +
                                std::to_string(model.dims.in_dim));
  }
  std::vector<Tensor> outputs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    h = node_aggregate(tape, model.genotype.node_aggs[l], ctx, maybe_drop(h), model.layers[l], model.activation);
    outputs.push_back(h);
  }
  std::vector<Tensor> selected;
  for (auto l : model.selected_layers()) selected.push_back(outputs[l]);
  Tensor z = maybe_drop(layer_aggregate(tape, model.genotype.layer_agg, selected, model.layer_agg));
  check_params(classifier_schema(z.cols(), model.dims.num_classes), model.classifier, "classifier");
  return tape.add_row(tape.matmul(z, model.classifier.at("weight")), model.classifier.at("bias"));
}

Tensor forward(Tape& tape, const GnnModel& model, const Genotype& genotype, const GraphContext& ctx,
               const ForwardOptions& opts) {
  if (!(genotype == model.genotype)) {
    throw std::invalid_argument("forward: model was built for " + encode(model.genotype) + ", not " +
                                encode(genotype));
  }
  return forward(tape, model, ctx, opts);
}

}  // namespace snag

#include "snag/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "snag/adam.hpp"

namespace snag {

TaskData::TaskData(const Dataset& ds) : dataset_(&ds) {
  if (ds.graphs.empty()) throw std::invalid_argument("dataset has no graphs");
  metric_ = ds.multilabel ? MetricKind::kMicroF1 : MetricKind::kAccuracy;
  parts_.reserve(ds.graphs.size());
  for (const auto& g : ds.graphs) {
    Part p;
    p.graph = add_self_loops(g);
    p.train = mask_rows(g.train_mask);
    p.val = mask_rows(g.val_mask);
    p.test = mask_rows(g.test_mask);
    parts_.push_back(std::move(p));
  }
  // Contexts point into parts_, so build them once the vector is final.
  for (auto& p : parts_) p.ctx = std::make_unique<GraphContext>(p.graph);
  bool any_train = false, any_val = false;
  for (const auto& p : parts_) {
    any_train |= !p.train.empty();
    any_val |= !p.val.empty();
  }
  if (!any_train || !any_val) throw std::invalid_argument("dataset needs non-empty train and validation splits");
}

std::pair<double, double> evaluate(const GnnModel& model, const TaskData& task) {
  MetricCounts val, test;
  for (const auto& p : task.parts()) {
    if (p.val.empty() && p.test.empty()) continue;
    Tape tape(false);
    Tensor logits = forward(tape, model, *p.ctx);
    accumulate_metric(val, task.metric_kind(), logits, p.graph, p.val);
    accumulate_metric(test, task.metric_kind(), logits, p.graph, p.test);
  }
  return {finalize_metric(val, task.metric_kind()), test.total ? finalize_metric(test, task.metric_kind()) : 0.0};
}

namespace {

bool all_finite(const std::vector<Tensor>& params) {
  for (const auto& t : params) {
    for (double v : t.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

ChildResult train_child(const Genotype& genotype, const TaskData& task, const ChildConfig& cfg, Rng init_rng,
                        Rng dropout_rng, ParamDict* shared) {
  const auto start = std::chrono::steady_clock::now();
  ChildResult res;
  GnnModel model = GnnModel::create(genotype, {task.in_dim(), cfg.hidden, task.num_classes()}, init_rng);
  model.dropout = cfg.dropout;
  if (shared) load_shared(*shared, model);

  std::vector<Tensor> params = model.parameters();
  AdamState adam({.learning_rate = cfg.lr, .weight_decay = cfg.weight_decay}, params);

  auto [val, test] = evaluate(model, task);
  res.val_metric = val;
  res.test_metric = test;
  res.model = model.clone();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (const auto& p : task.parts()) {
      if (p.train.empty()) continue;
      for (auto& t : params) t.zero_grad();
      Tape tape;
      Tensor logits = forward(tape, model, *p.ctx, {.training = true, .dropout_rng = &dropout_rng});
      Tensor l = loss(tape, logits, p.graph, p.train);
      if (!std::isfinite(l.item())) {
        res.diverged = true;
        break;
      }
      tape.backward(l);
      adam_step(params, adam);
    }
    res.epochs = epoch;
    if (res.diverged || !all_finite(params)) {
      res.diverged = true;
      break;
    }
    std::tie(val, test) = evaluate(model, task);
    if (val > res.val_metric) {
      res.val_metric = val;
      res.test_metric = test;
      res.model = model.clone();
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  if (res.diverged) {
    res.val_metric = 0.0;
    res.test_metric = 0.0;
  } else if (shared) {
    save_shared(*shared, res.model);
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace snag

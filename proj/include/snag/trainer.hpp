#pragma once

// Inner loop of the search: train one child architecture with Adam and
// early stopping on the validation metric.

#include <memory>
#include <vector>

#include "snag/gnn.hpp"
#include "snag/param_dict.hpp"

namespace snag {

struct ChildConfig {
  double lr = 0.005;
  double weight_decay = 5e-4;
  std::size_t hidden = 64;
  double dropout = 0.5;
  std::size_t max_epochs = 300;
  std::size_t patience = 30;
};

// A dataset prepared for training: self-looped graphs, their aggregation
// contexts and the row sets of each split.
class TaskData {
 public:
  explicit TaskData(const Dataset& ds);
  TaskData(const TaskData&) = delete;
  TaskData& operator=(const TaskData&) = delete;

  struct Part {
    Graph graph;
    std::unique_ptr<GraphContext> ctx;
    std::vector<Index> train, val, test;
  };

  const Dataset& dataset() const { return *dataset_; }
  MetricKind metric_kind() const { return metric_; }
  std::size_t in_dim() const { return dataset_->num_features; }
  std::size_t num_classes() const { return dataset_->num_classes; }
  const std::vector<Part>& parts() const { return parts_; }

 private:
  const Dataset* dataset_;
  MetricKind metric_;
  std::vector<Part> parts_;
};

struct ChildResult {
  double val_metric = 0.0;   // best validation metric seen
  double test_metric = 0.0;  // test metric at the best validation epoch
  std::size_t epochs = 0;    // training epochs run
  bool diverged = false;
  double seconds = 0.0;
  GnnModel model;            // parameters at the best validation epoch
};

// Model init draws from init_rng; dropout masks from dropout_rng. With a
// ParamDict, stored entries replace the fresh parameters before training
// and the best parameters are written back afterwards (skipped when the
// run diverged).
ChildResult train_child(const Genotype& genotype, const TaskData& task, const ChildConfig& cfg, Rng init_rng,
                        Rng dropout_rng, ParamDict* shared = nullptr);

// Validation and test metrics of a model without training.
std::pair<double, double> evaluate(const GnnModel& model, const TaskData& task);

}  // namespace snag

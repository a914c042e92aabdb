#include <stdexcept>

#include "snag/gnn.hpp"

namespace snag {

Tensor loss(Tape& tape, const Tensor& logits, const Graph& g, std::span<const Index> rows) {
  if (rows.empty()) throw std::invalid_argument("loss over an empty row set");
  if (g.multilabel) return tape.sigmoid_bce(logits, rows, g.label_matrix);
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (Index r : rows) labels.push_back(g.labels.at(static_cast<std::size_t>(r)));
  return tape.softmax_cross_entropy(logits, rows, labels);
}

void accumulate_metric(MetricCounts& counts, MetricKind kind, const Tensor& logits, const Graph& g,
                       std::span<const Index> rows) {
  const std::size_t c = logits.cols();
  if (kind == MetricKind::kAccuracy) {
    for (Index r : rows) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (logits.at(r, j) > logits.at(r, best)) best = j;
      }
      counts.correct += static_cast<int>(best) == g.labels[r];
      ++counts.total;
    }
    return;
  }
  // sigmoid(x) > 0.5 exactly when x > 0
  for (Index r : rows) {
    for (std::size_t j = 0; j < c; ++j) {
      const bool pred = logits.at(r, j) > 0.0;
      const bool truth = g.label_matrix[r * c + j] > 0.5;
      counts.tp += pred && truth;
      counts.fp += pred && !truth;
      counts.fn += !pred && truth;
    }
    ++counts.total;
  }
}

double finalize_metric(const MetricCounts& counts, MetricKind kind) {
  if (kind == MetricKind::kAccuracy) {
    return counts.total ? static_cast<double>(counts.correct) / static_cast<double>(counts.total) : 0.0;
  }
  const std::size_t denom = 2 * counts.tp + counts.fp + counts.fn;
  // Nothing predicted and nothing to find counts as a perfect score.
  return denom ? 2.0 * static_cast<double>(counts.tp) / static_cast<double>(denom) : 1.0;
}

double metric(MetricKind kind, const Tensor& logits, const Graph& g, std::span<const Index> rows) {
  if (rows.empty()) throw std::invalid_argument("metric over an empty mask");
  MetricCounts counts;
  accumulate_metric(counts, kind, logits, g, rows);
  return finalize_metric(counts, kind);
}

double accuracy(const Tensor& logits, std::span<const int> labels, std::span<const Index> rows) {
  Graph g;
  g.labels.assign(labels.begin(), labels.end());
  return metric(MetricKind::kAccuracy, logits, g, rows);
}

double micro_f1(const Tensor& logits, std::span<const double> targets, std::span<const Index> rows) {
  Graph g;
  g.multilabel = true;
  g.label_matrix.assign(targets.begin(), targets.end());
  return metric(MetricKind::kMicroF1, logits, g, rows);
}

}  // namespace snag

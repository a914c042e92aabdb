#pragma once

// Reverse-mode differentiation over Tensor values.
//
// A Tape records every op whose output depends on a requires_grad tensor,
// together with its backward rule. Records are appended in evaluation order,
// so replaying them in reverse visits each op once, after all its consumers.

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "snag/rng.hpp"
#include "snag/tensor.hpp"

namespace snag {

enum class OpKind {
  kMatmul,
  kAdd,
  kAddRow,
  kMul,
  kMulCol,
  kMulRow,
  kScale,
  kRelu,
  kElu,
  kLeakyRelu,
  kTanh,
  kSigmoid,
  kConcat,
  kRowSoftmax,
  kLogSoftmax,
  kSegmentSum,
  kSegmentMean,
  kSegmentMax,
  kSegmentSoftmax,
  kGatherRows,
  kScatterRows,
  kNeighborSum,
  kNeighborMax,
  kDropout,
  kMaximum,
  kSum,
  kMean,
  kRowSum,
  kSliceCols,
  kElement,
  kSoftmaxCrossEntropy,
  kSigmoidBce,
};

std::string_view to_string(OpKind kind);
// Throws std::invalid_argument for unknown names.
OpKind op_kind_from_string(std::string_view name);

// Non-tensor arguments for Tape::record. Only the fields relevant to the op
// kind are read.
struct OpAttrs {
  std::size_t axis = 1;
  double slope = 0.2;
  double rate = 0.0;
  double factor = 1.0;
  bool training = true;
  Rng* rng = nullptr;
  std::vector<Index> offsets;
  std::vector<Index> indices;
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Tape {
 public:
  // A non-recording tape evaluates ops without storing backward rules.
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Generic entry point. Throws std::invalid_argument on shape mismatch or
  // an op kind that needs arguments record() cannot carry.
  Tensor record(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  // a[m,n] + bias[1,n] broadcast over rows.
  Tensor add_row(const Tensor& a, const Tensor& bias);
  Tensor mul(const Tensor& a, const Tensor& b);
  // a[m,n] * w[m,1] broadcast over columns.
  Tensor mul_col(const Tensor& a, const Tensor& w);
  // a[m,n] * r[1,n] broadcast over rows.
  Tensor mul_row(const Tensor& a, const Tensor& r);
  Tensor scale(const Tensor& a, double factor);

  Tensor relu(const Tensor& a);
  Tensor elu(const Tensor& a);
  Tensor leaky_relu(const Tensor& a, double slope);
  Tensor tanh(const Tensor& a);
  Tensor sigmoid(const Tensor& a);

  Tensor concat(std::span<const Tensor> parts, std::size_t axis);
  Tensor row_softmax(const Tensor& a);
  Tensor log_softmax(const Tensor& a);

  // Segment ops over rows of `values`; segment s covers rows
  // [offsets[s], offsets[s+1]). Empty segments produce zeros.
  Tensor segment_sum(const Tensor& values, std::span<const Index> offsets);
  Tensor segment_mean(const Tensor& values, std::span<const Index> offsets);
  Tensor segment_max(const Tensor& values, std::span<const Index> offsets);
  Tensor segment_softmax(const Tensor& scores, std::span<const Index> offsets);

  Tensor gather_rows(const Tensor& a, std::span<const Index> rows);
  // Copy of `base` with rows[i] replaced by values row i. rows must be unique.
  Tensor scatter_rows(const Tensor& base, std::span<const Index> rows, const Tensor& values);

  // Fused gather + segment reduction over a CSR neighborhood:
  // out[s] = sum_{e in segment s} w_e * h[indices[e]].
  Tensor neighbor_sum(const Tensor& h, std::span<const Index> offsets,
                      std::span<const Index> indices);
  Tensor neighbor_sum(const Tensor& h, std::span<const Index> offsets,
                      std::span<const Index> indices, std::span<const double> weights);
  Tensor neighbor_sum(const Tensor& h, std::span<const Index> offsets,
                      std::span<const Index> indices, const Tensor& weights);
  Tensor neighbor_max(const Tensor& h, std::span<const Index> offsets,
                      std::span<const Index> indices);

  // Inverted dropout. Identity when rate == 0 or !training.
  Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training);

  Tensor maximum(const Tensor& a, const Tensor& b);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  Tensor row_sum(const Tensor& a);
  Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
  Tensor element(const Tensor& a, std::size_t row, std::size_t col);

  // Mean softmax cross-entropy over the listed rows.
  Tensor softmax_cross_entropy(const Tensor& logits, std::span<const Index> rows,
                               std::span<const int> labels);
  // Mean per-label sigmoid binary cross-entropy over the listed rows;
  // targets is row-major [num_rows_of_logits x C] in {0,1}.
  Tensor sigmoid_bce(const Tensor& logits, std::span<const Index> rows,
                     std::span<const double> targets);

  // Populates gradients of every requires_grad tensor reachable from loss.
  void backward(const Tensor& loss);

 private:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  struct Node {
    OpKind kind;
    Tensor output;
    BackwardFn backward;
  };

  Tensor result(Shape shape, std::initializer_list<const Tensor*> inputs);
  Tensor result(Shape shape, std::span<const Tensor> inputs);
  void push(OpKind kind, const Tensor& out, BackwardFn fn);

  Tensor unary(OpKind kind, const Tensor& a, double (*f)(double, double),
               double (*df)(double x, double y, double p), double param);

  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace snag

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "snag/tensor.hpp"

namespace snag {

struct AdamConfig {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // L2 penalty folded into the gradient before the moment updates.
  double weight_decay = 0.0;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const Tensor> params);
};

// Bias-corrected Adam update of every param, in place; zeroes the grads.
// Throws std::invalid_argument if a param has no gradient buffer or the
// moment buffers do not match the params.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace snag

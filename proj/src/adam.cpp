#include "snag/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace snag {

AdamState::AdamState(AdamConfig cfg, std::span<const Tensor> params) : config(cfg) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const auto& p : params) {
    first_moment.emplace_back(p.numel(), 0.0);
    second_moment.emplace_back(p.numel(), 0.0);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                                " params, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw std::invalid_argument("adam_step: param " + std::to_string(i) + " " +
                                  shape_to_string(params[i].shape()) + " has no gradient");
    }
    if (state.first_moment[i].size() != params[i].numel()) {
      throw std::invalid_argument("adam_step: moment buffer size mismatch for param " + std::to_string(i));
    }
  }

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    auto g = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] + c.weight_decay * w[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
    params[i].zero_grad();
  }
}

}  // namespace snag

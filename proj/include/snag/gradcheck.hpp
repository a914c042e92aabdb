#pragma once

#include <functional>
#include <span>
#include <vector>

#include "snag/tape.hpp"

namespace snag {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

using ScalarFn = std::function<Tensor(Tape&)>;

// Compares tape gradients of fn with respect to every tensor in `points`
// against central differences of step `step`. The per-entry error is
// |analytic - numeric| / max(|analytic|, |numeric|, floor); floor keeps
// near-zero entries from dividing by rounding noise.
GradCheckReport finite_diff_check(const ScalarFn& fn, std::span<Tensor> points, double tolerance,
                                  double step = 1e-5, double floor = 1e-4);

inline GradCheckReport finite_diff_check(const ScalarFn& fn, Tensor point, double tolerance,
                                         double step = 1e-5, double floor = 1e-4) {
  return finite_diff_check(fn, std::span<Tensor>(&point, 1), tolerance, step, floor);
}

}  // namespace snag

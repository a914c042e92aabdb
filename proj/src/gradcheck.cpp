#include "snag/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace snag {

GradCheckReport finite_diff_check(const ScalarFn& fn, std::span<Tensor> points, double tolerance,
                                  double step, double floor) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("finite_diff_check: tolerance must be positive");

  std::vector<bool> saved_flags;
  for (auto& p : points) {
    saved_flags.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }

  {
    Tape tape;
    Tensor loss = fn(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& p : points) analytic.emplace_back(p.grad().begin(), p.grad().end());

  auto evaluate = [&]() {
    Tape tape(false);
    return fn(tape).item();
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < points.size(); ++k) {
    auto x = points[k].data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + step;
      const double fp = evaluate();
      x[i] = orig - step;
      const double fm = evaluate();
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      report.max_relative_error = std::max(report.max_relative_error, std::abs(a - numeric) / denom);
      ++report.entries_checked;
    }
  }
  for (std::size_t k = 0; k < points.size(); ++k) {
    points[k].clear_grad();
    points[k].set_requires_grad(saved_flags[k]);
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace snag

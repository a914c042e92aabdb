#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "snag/graph.hpp"
#include "snag/tensor.hpp"

namespace snag::test {

inline Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = true, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t = Tensor::zeros(r, c, grad);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Undirected random graph on n nodes with self-loops already in place.
inline Graph random_graph(std::size_t n, double p, std::size_t d, std::size_t classes, std::mt19937_64& rng) {
  std::vector<std::pair<Index, Index>> edges;
  std::bernoulli_distribution coin(p);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (coin(rng)) edges.emplace_back(static_cast<Index>(u), static_cast<Index>(v));
    }
  }
  Graph g;
  g.num_nodes = n;
  std::tie(g.offsets, g.targets) = build_csr(n, edges, true);
  g.features = random_tensor(n, d, rng, false);
  g.num_classes = classes;
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  for (std::size_t v = 0; v < n; ++v) g.labels.push_back(lab(rng));
  g.train_mask.assign(n, 1);
  g.val_mask.assign(n, 0);
  g.test_mask.assign(n, 0);
  return add_self_loops(g);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace snag::test

#include "snag/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "snag/kernels.hpp"

namespace snag {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 32> kOpNames{{
    {OpKind::kMatmul, "matmul"},
    {OpKind::kAdd, "add"},
    {OpKind::kAddRow, "add-row"},
    {OpKind::kMul, "mul"},
    {OpKind::kMulCol, "mul-col"},
    {OpKind::kMulRow, "mul-row"},
    {OpKind::kScale, "scale"},
    {OpKind::kRelu, "relu"},
    {OpKind::kElu, "elu"},
    {OpKind::kLeakyRelu, "leaky-relu"},
    {OpKind::kTanh, "tanh"},
    {OpKind::kSigmoid, "sigmoid"},
    {OpKind::kConcat, "concat"},
    {OpKind::kRowSoftmax, "row-softmax"},
    {OpKind::kLogSoftmax, "log-softmax"},
    {OpKind::kSegmentSum, "segment-sum"},
    {OpKind::kSegmentMean, "segment-mean"},
    {OpKind::kSegmentMax, "segment-max"},
    {OpKind::kSegmentSoftmax, "segment-softmax"},
    {OpKind::kGatherRows, "gather-rows"},
    {OpKind::kScatterRows, "scatter-rows"},
    {OpKind::kNeighborSum, "neighbor-sum"},
    {OpKind::kNeighborMax, "neighbor-max"},
    {OpKind::kDropout, "dropout"},
    {OpKind::kMaximum, "maximum"},
    {OpKind::kSum, "sum"},
    {OpKind::kMean, "mean"},
    {OpKind::kRowSum, "row-sum"},
    {OpKind::kSliceCols, "slice-cols"},
    {OpKind::kElement, "element"},
    {OpKind::kSoftmaxCrossEntropy, "softmax-cross-entropy"},
    {OpKind::kSigmoidBce, "sigmoid-bce"},
}};

[[noreturn]] void fail(std::string_view op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

void require_matrix(std::string_view op, const Tensor& a) {
  if (!a.defined()) fail(op, "undefined input tensor");
  if (a.rank() != 2) fail(op, "expected a matrix, got " + shape_to_string(a.shape()));
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) fail(op, "undefined input tensor");
  if (a.shape() != b.shape()) {
    fail(op, "shape mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

void check_offsets(std::string_view op, std::span<const Index> offsets, std::size_t rows) {
  if (offsets.size() < 2) fail(op, "offsets must have at least 2 entries");
  if (offsets.front() != 0) fail(op, "offsets must start at 0");
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] < offsets[i - 1]) fail(op, "offsets must be non-decreasing");
  }
  if (static_cast<std::size_t>(offsets.back()) != rows) {
    fail(op, "last offset " + std::to_string(offsets.back()) + " does not match " +
                 std::to_string(rows) + " rows");
  }
}

void check_indices(std::string_view op, std::span<const Index> idx, std::size_t rows) {
  for (Index i : idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows) {
      fail(op, "row index " + std::to_string(i) + " out of range for " + std::to_string(rows) + " rows");
    }
  }
}

// Handles are captured by value in const closures; the gradient buffer is
// still shared storage, so writing through a copy is intended.
double* grad_ptr(const Tensor& t) {
  Tensor h = t;
  return h.requires_grad() ? h.grad().data() : nullptr;
}

std::vector<Index> to_vec(std::span<const Index> s) { return {s.begin(), s.end()}; }

}  // namespace

std::string_view to_string(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

OpKind op_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kOpNames) {
    if (n == name) return k;
  }
  throw std::invalid_argument("unknown op kind '" + std::string(name) + "'");
}

Tensor Tape::result(Shape shape, std::initializer_list<const Tensor*> inputs) {
  bool rg = false;
  for (const Tensor* t : inputs) rg = rg || t->requires_grad();
  return Tensor(std::move(shape), recording_ && rg);
}

Tensor Tape::result(Shape shape, std::span<const Tensor> inputs) {
  bool rg = false;
  for (const Tensor& t : inputs) rg = rg || t.requires_grad();
  return Tensor(std::move(shape), recording_ && rg);
}

void Tape::push(OpKind kind, const Tensor& out, BackwardFn fn) {
  if (!out.requires_grad()) return;
  nodes_.push_back(Node{kind, out, std::move(fn)});
}

Tensor Tape::record(OpKind kind, std::span<const Tensor> in, const OpAttrs& at) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      fail(to_string(kind), "expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::kMatmul: need(2); return matmul(in[0], in[1]);
    case OpKind::kAdd: need(2); return add(in[0], in[1]);
    case OpKind::kAddRow: need(2); return add_row(in[0], in[1]);
    case OpKind::kMul: need(2); return mul(in[0], in[1]);
    case OpKind::kMulCol: need(2); return mul_col(in[0], in[1]);
    case OpKind::kMulRow: need(2); return mul_row(in[0], in[1]);
    case OpKind::kScale: need(1); return scale(in[0], at.factor);
    case OpKind::kRelu: need(1); return relu(in[0]);
    case OpKind::kElu: need(1); return elu(in[0]);
    case OpKind::kLeakyRelu: need(1); return leaky_relu(in[0], at.slope);
    case OpKind::kTanh: need(1); return tanh(in[0]);
    case OpKind::kSigmoid: need(1); return sigmoid(in[0]);
    case OpKind::kConcat: return concat(in, at.axis);
    case OpKind::kRowSoftmax: need(1); return row_softmax(in[0]);
    case OpKind::kLogSoftmax: need(1); return log_softmax(in[0]);
    case OpKind::kSegmentSum: need(1); return segment_sum(in[0], at.offsets);
    case OpKind::kSegmentMean: need(1); return segment_mean(in[0], at.offsets);
    case OpKind::kSegmentMax: need(1); return segment_max(in[0], at.offsets);
    case OpKind::kSegmentSoftmax: need(1); return segment_softmax(in[0], at.offsets);
    case OpKind::kGatherRows: need(1); return gather_rows(in[0], at.indices);
    case OpKind::kScatterRows: need(2); return scatter_rows(in[0], at.indices, in[1]);
    case OpKind::kNeighborSum:
      if (in.size() == 2) return neighbor_sum(in[0], at.offsets, at.indices, in[1]);
      need(1);
      return neighbor_sum(in[0], at.offsets, at.indices);
    case OpKind::kNeighborMax: need(1); return neighbor_max(in[0], at.offsets, at.indices);
    case OpKind::kDropout:
      need(1);
      if (at.rng == nullptr) fail("dropout", "an explicit rng is required");
      return dropout(in[0], at.rate, *at.rng, at.training);
    case OpKind::kMaximum: need(2); return maximum(in[0], in[1]);
    case OpKind::kSum: need(1); return sum(in[0]);
    case OpKind::kMean: need(1); return mean(in[0]);
    case OpKind::kRowSum: need(1); return row_sum(in[0]);
    case OpKind::kSliceCols: need(1); return slice_cols(in[0], at.begin, at.end);
    case OpKind::kElement: need(1); return element(in[0], at.begin, at.end);
    case OpKind::kSoftmaxCrossEntropy:
    case OpKind::kSigmoidBce:
      fail(to_string(kind), "label-carrying losses are not available through record()");
  }
  throw std::invalid_argument("unknown op kind " + std::to_string(static_cast<int>(kind)));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) {
    fail("matmul", "inner dimensions differ: " + shape_to_string(a.shape()) + " vs " +
                       shape_to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = result({m, n}, {&a, &b});
  const auto& kt = kernels::active();
  kt.gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data().data());
  push(OpKind::kMatmul, out, [a, b, m, k, n](std::span<const double> g) mutable {
    const auto& kt = kernels::active();
    if (double* ga = grad_ptr(a)) kt.gemm_nt(m, n, k, g.data(), b.data().data(), ga);
    if (double* gb = grad_ptr(b)) kt.gemm_tn(k, m, n, a.data().data(), g.data(), gb);
  });
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Tensor out = result(a.shape(), {&a, &b});
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  push(OpKind::kAdd, out, [a, b](std::span<const double> g) mutable {
    for (const Tensor* t : {&a, &b}) {
      if (double* gt = grad_ptr(*t)) kernels::active().axpy(g.size(), 1.0, g.data(), gt);
    }
  });
  return out;
}

Tensor Tape::add_row(const Tensor& a, const Tensor& bias) {
  require_matrix("add-row", a);
  require_matrix("add-row", bias);
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    fail("add-row", "bias " + shape_to_string(bias.shape()) + " does not broadcast over " +
                        shape_to_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = result(a.shape(), {&a, &bias});
  auto o = out.data();
  auto x = a.data(), bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = x[i * n + j] + bv[j];
  push(OpKind::kAddRow, out, [a, bias, m, n](std::span<const double> g) mutable {
    const auto& kt = kernels::active();
    if (double* ga = grad_ptr(a)) kt.axpy(g.size(), 1.0, g.data(), ga);
    if (double* gb = grad_ptr(bias)) {
      for (std::size_t i = 0; i < m; ++i) kt.axpy(n, 1.0, g.data() + i * n, gb);
    }
  });
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  Tensor out = result(a.shape(), {&a, &b});
  const auto& kt = kernels::active();
  kt.mul(out.numel(), a.data().data(), b.data().data(), out.data().data());
  push(OpKind::kMul, out, [a, b](std::span<const double> g) mutable {
    const auto& kt = kernels::active();
    if (double* ga = grad_ptr(a)) kt.mul_acc(g.size(), g.data(), b.data().data(), ga);
    if (double* gb = grad_ptr(b)) kt.mul_acc(g.size(), g.data(), a.data().data(), gb);
  });
  return out;
}

Tensor Tape::mul_col(const Tensor& a, const Tensor& w) {
  require_matrix("mul-col", a);
  require_matrix("mul-col", w);
  if (w.cols() != 1 || w.rows() != a.rows()) {
    fail("mul-col", "weights " + shape_to_string(w.shape()) + " do not broadcast over " +
                        shape_to_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = result(a.shape(), {&a, &w});
  auto o = out.data();
  auto x = a.data(), wv = w.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = x[i * n + j] * wv[i];
  push(OpKind::kMulCol, out, [a, w, m, n](std::span<const double> g) mutable {
    const auto& kt = kernels::active();
    if (double* ga = grad_ptr(a)) {
      for (std::size_t i = 0; i < m; ++i) kt.axpy(n, w.data()[i], g.data() + i * n, ga + i * n);
    }
    if (double* gw = grad_ptr(w)) {
      for (std::size_t i = 0; i < m; ++i) gw[i] += kt.dot(n, g.data() + i * n, a.data().data() + i * n);
    }
  });
  return out;
}

Tensor Tape::mul_row(const Tensor& a, const Tensor& r) {
  require_matrix("mul-row", a);
  require_matrix("mul-row", r);
  if (r.rows() != 1 || r.cols() != a.cols()) {
    fail("mul-row", "row " + shape_to_string(r.shape()) + " does not broadcast over " +
                        shape_to_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = result(a.shape(), {&a, &r});
  const auto& kt = kernels::active();
  for (std::size_t i = 0; i < m; ++i) kt.mul(n, a.data().data() + i * n, r.data().data(), out.data().data() + i * n);
  push(OpKind::kMulRow, out, [a, r, m, n](std::span<const double> g) mutable {
    const auto& kt = kernels::active();
    if (double* ga = grad_ptr(a)) {
      for (std::size_t i = 0; i < m; ++i) kt.mul_acc(n, g.data() + i * n, r.data().data(), ga + i * n);
    }
    if (double* gr = grad_ptr(r)) {
      for (std::size_t i = 0; i < m; ++i) kt.mul_acc(n, g.data() + i * n, a.data().data() + i * n, gr);
    }
  });
  return out;
}

Tensor Tape::scale(const Tensor& a, double factor) {
  Tensor out = result(a.shape(), {&a});
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * x[i];
  push(OpKind::kScale, out, [a, factor](std::span<const double> g) mutable {
    if (double* ga = grad_ptr(a)) kernels::active().axpy(g.size(), factor, g.data(), ga);
  });
  return out;
}

Tensor Tape::unary(OpKind kind, const Tensor& a, double (*f)(double, double),
                   double (*df)(double, double, double), double param) {
  if (!a.defined()) fail(to_string(kind), "undefined input tensor");
  Tensor out = result(a.shape(), {&a});
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i], param);
  push(kind, out, [a, out, df, param](std::span<const double> g) mutable {
    if (double* ga = grad_ptr(a)) {
      auto x = a.data();
      auto y = out.data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i], param);
    }
  });
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  return unary(
      OpKind::kRelu, a, [](double x, double) { return x > 0.0 ? x : 0.0; },
      [](double x, double, double) { return x > 0.0 ? 1.0 : 0.0; }, 0.0);
}

Tensor Tape::elu(const Tensor& a) {
  return unary(
      OpKind::kElu, a, [](double x, double) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y, double) { return x > 0.0 ? 1.0 : y + 1.0; }, 0.0);
}

Tensor Tape::leaky_relu(const Tensor& a, double slope) {
  return unary(
      OpKind::kLeakyRelu, a, [](double x, double s) { return x > 0.0 ? x : s * x; },
      [](double x, double, double s) { return x > 0.0 ? 1.0 : s; }, slope);
}

Tensor Tape::tanh(const Tensor& a) {
  return unary(
      OpKind::kTanh, a, [](double x, double) { return std::tanh(x); },
      [](double, double y, double) { return 1.0 - y * y; }, 0.0);
}

Tensor Tape::sigmoid(const Tensor& a) {
  return unary(
      OpKind::kSigmoid, a,
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y, double) { return y * (1.0 - y); }, 0.0);
}

Tensor Tape::concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) fail("concat", "no inputs");
  if (axis > 1) fail("concat", "axis must be 0 or 1, got " + std::to_string(axis));
  for (const auto& p : parts) require_matrix("concat", p);
  const std::size_t other = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    const std::size_t o = axis == 0 ? p.cols() : p.rows();
    if (o != other) {
      fail("concat", "shapes differ off the concat axis: " + shape_to_string(parts[0].shape()) +
                         " vs " + shape_to_string(p.shape()));
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  Shape shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  Tensor out = result(shape, parts);
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  auto o = out.data();
  if (axis == 0) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.data().begin(), p.data().end(), o.begin() + off);
      off += p.numel();
    }
  } else {
    const std::size_t rows = other;
    std::size_t col = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(p.data().begin() + r * w, w, o.begin() + r * total + col);
      }
      col += w;
    }
  }
  push(OpKind::kConcat, out, [inputs, axis, total](std::span<const double> g) mutable {
    std::size_t off = 0;
    for (auto& p : inputs) {
      double* gp = grad_ptr(p);
      if (axis == 0) {
        if (gp) for (std::size_t i = 0; i < p.numel(); ++i) gp[i] += g[off + i];
        off += p.numel();
      } else {
        const std::size_t w = p.cols();
        if (gp) {
          for (std::size_t r = 0; r < p.rows(); ++r)
            for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * total + off + j];
        }
        off += w;
      }
    }
  });
  return out;
}

Tensor Tape::row_softmax(const Tensor& a) {
  require_matrix("row-softmax", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = result(a.shape(), {&a});
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double mx = *std::max_element(x.begin() + i * n, x.begin() + (i + 1) * n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[i * n + j] = std::exp(x[i * n + j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= z;
  }
  push(OpKind::kRowSoftmax, out, [a, out, m, n](std::span<const double> g) mutable {
    double* ga = grad_ptr(a);
    if (!ga) return;
    auto y = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      const double s = kernels::active().dot(n, g.data() + i * n, y.data() + i * n);
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[i * n + j] * (g[i * n + j] - s);
    }
  });
  return out;
}

Tensor Tape::log_softmax(const Tensor& a) {
  require_matrix("log-softmax", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = result(a.shape(), {&a});
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double mx = *std::max_element(x.begin() + i * n, x.begin() + (i + 1) * n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[i * n + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] - lse;
  }
  push(OpKind::kLogSoftmax, out, [a, out, m, n](std::span<const double> g) mutable {
    double* ga = grad_ptr(a);
    if (!ga) return;
    auto y = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] - std::exp(y[i * n + j]) * s;
    }
  });
  return out;
}

Tensor Tape::segment_sum(const Tensor& values, std::span<const Index> offsets) {
  require_matrix("segment-sum", values);
  check_offsets("segment-sum", offsets, values.rows());
  const std::size_t segs = offsets.size() - 1, d = values.cols();
  Tensor out = result({segs, d}, {&values});
  const auto& kt = kernels::active();
  for (std::size_t s = 0; s < segs; ++s) {
    for (Index e = offsets[s]; e < offsets[s + 1]; ++e) {
      kt.axpy(d, 1.0, values.data().data() + e * d, out.data().data() + s * d);
    }
  }
  push(OpKind::kSegmentSum, out, [values, off = to_vec(offsets), segs, d](std::span<const double> g) mutable {
    double* gv = grad_ptr(values);
    if (!gv) return;
    for (std::size_t s = 0; s < segs; ++s)
      for (Index e = off[s]; e < off[s + 1]; ++e) kernels::active().axpy(d, 1.0, g.data() + s * d, gv + e * d);
  });
  return out;
}

Tensor Tape::segment_mean(const Tensor& values, std::span<const Index> offsets) {
  require_matrix("segment-mean", values);
  check_offsets("segment-mean", offsets, values.rows());
  const std::size_t segs = offsets.size() - 1, d = values.cols();
  Tensor out = result({segs, d}, {&values});
  const auto& kt = kernels::active();
  for (std::size_t s = 0; s < segs; ++s) {
    const Index cnt = offsets[s + 1] - offsets[s];
    if (cnt == 0) continue;
    const double w = 1.0 / static_cast<double>(cnt);
    for (Index e = offsets[s]; e < offsets[s + 1]; ++e) {
      kt.axpy(d, w, values.data().data() + e * d, out.data().data() + s * d);
    }
  }
  push(OpKind::kSegmentMean, out, [values, off = to_vec(offsets), segs, d](std::span<const double> g) mutable {
    double* gv = grad_ptr(values);
    if (!gv) return;
    for (std::size_t s = 0; s < segs; ++s) {
      const Index cnt = off[s + 1] - off[s];
      if (cnt == 0) continue;
      const double w = 1.0 / static_cast<double>(cnt);
      for (Index e = off[s]; e < off[s + 1]; ++e) kernels::active().axpy(d, w, g.data() + s * d, gv + e * d);
    }
  });
  return out;
}

Tensor Tape::segment_max(const Tensor& values, std::span<const Index> offsets) {
  require_matrix("segment-max", values);
  check_offsets("segment-max", offsets, values.rows());
  const std::size_t segs = offsets.size() - 1, d = values.cols();
  Tensor out = result({segs, d}, {&values});
  std::vector<Index> arg(segs * d, -1);
  auto v = values.data();
  auto o = out.data();
  for (std::size_t s = 0; s < segs; ++s) {
    for (Index e = offsets[s]; e < offsets[s + 1]; ++e) {
      for (std::size_t j = 0; j < d; ++j) {
        Index& best = arg[s * d + j];
        if (best < 0 || v[e * d + j] > v[best * d + j]) best = e;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const Index best = arg[s * d + j];
      o[s * d + j] = best < 0 ? 0.0 : v[best * d + j];
    }
  }
  push(OpKind::kSegmentMax, out, [values, arg = std::move(arg), d](std::span<const double> g) mutable {
    double* gv = grad_ptr(values);
    if (!gv) return;
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (arg[i] >= 0) gv[arg[i] * d + i % d] += g[i];
    }
  });
  return out;
}

Tensor Tape::segment_softmax(const Tensor& scores, std::span<const Index> offsets) {
  require_matrix("segment-softmax", scores);
  check_offsets("segment-softmax", offsets, scores.rows());
  const std::size_t segs = offsets.size() - 1, d = scores.cols();
  Tensor out = result(scores.shape(), {&scores});
  auto x = scores.data();
  auto y = out.data();
  for (std::size_t s = 0; s < segs; ++s) {
    const Index b = offsets[s], e = offsets[s + 1];
    if (b == e) continue;
    for (std::size_t j = 0; j < d; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index r = b; r < e; ++r) mx = std::max(mx, x[r * d + j]);
      double z = 0.0;
      for (Index r = b; r < e; ++r) z += (y[r * d + j] = std::exp(x[r * d + j] - mx));
      for (Index r = b; r < e; ++r) y[r * d + j] /= z;
    }
  }
  push(OpKind::kSegmentSoftmax, out, [scores, out, off = to_vec(offsets), segs, d](std::span<const double> g) mutable {
    double* gs = grad_ptr(scores);
    if (!gs) return;
    auto y = out.data();
    for (std::size_t s = 0; s < segs; ++s) {
      for (std::size_t j = 0; j < d; ++j) {
        double dotp = 0.0;
        for (Index r = off[s]; r < off[s + 1]; ++r) dotp += g[r * d + j] * y[r * d + j];
        for (Index r = off[s]; r < off[s + 1]; ++r) gs[r * d + j] += y[r * d + j] * (g[r * d + j] - dotp);
      }
    }
  });
  return out;
}

Tensor Tape::gather_rows(const Tensor& a, std::span<const Index> rows) {
  require_matrix("gather-rows", a);
  check_indices("gather-rows", rows, a.rows());
  if (rows.empty()) fail("gather-rows", "empty row selection");
  const std::size_t d = a.cols();
  Tensor out = result({rows.size(), d}, {&a});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(a.data().begin() + rows[i] * d, d, out.data().begin() + i * d);
  }
  push(OpKind::kGatherRows, out, [a, idx = to_vec(rows), d](std::span<const double> g) mutable {
    double* ga = grad_ptr(a);
    if (!ga) return;
    for (std::size_t i = 0; i < idx.size(); ++i) kernels::active().axpy(d, 1.0, g.data() + i * d, ga + idx[i] * d);
  });
  return out;
}

Tensor Tape::scatter_rows(const Tensor& base, std::span<const Index> rows, const Tensor& values) {
  require_matrix("scatter-rows", base);
  require_matrix("scatter-rows", values);
  check_indices("scatter-rows", rows, base.rows());
  if (values.rows() != rows.size() || values.cols() != base.cols()) {
    fail("scatter-rows", "values " + shape_to_string(values.shape()) + " do not fit " +
                             std::to_string(rows.size()) + " rows of " + shape_to_string(base.shape()));
  }
  const std::size_t d = base.cols();
  std::vector<char> replaced(base.rows(), 0);
  for (Index r : rows) {
    if (replaced[r]) fail("scatter-rows", "duplicate row index " + std::to_string(r));
    replaced[r] = 1;
  }
  Tensor out = result(base.shape(), {&base, &values});
  std::copy(base.data().begin(), base.data().end(), out.data().begin());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(values.data().begin() + i * d, d, out.data().begin() + rows[i] * d);
  }
  push(OpKind::kScatterRows, out,
       [base, values, idx = to_vec(rows), replaced = std::move(replaced), d](std::span<const double> g) mutable {
         if (double* gb = grad_ptr(base)) {
           for (std::size_t r = 0; r < replaced.size(); ++r) {
             if (!replaced[r]) kernels::active().axpy(d, 1.0, g.data() + r * d, gb + r * d);
           }
         }
         if (double* gv = grad_ptr(values)) {
           for (std::size_t i = 0; i < idx.size(); ++i) kernels::active().axpy(d, 1.0, g.data() + idx[i] * d, gv + i * d);
         }
       });
  return out;
}

Tensor Tape::neighbor_sum(const Tensor& h, std::span<const Index> offsets, std::span<const Index> indices) {
  std::vector<double> ones(indices.size(), 1.0);
  return neighbor_sum(h, offsets, indices, std::span<const double>(ones));
}

Tensor Tape::neighbor_sum(const Tensor& h, std::span<const Index> offsets, std::span<const Index> indices,
                          std::span<const double> weights) {
  require_matrix("neighbor-sum", h);
  check_offsets("neighbor-sum", offsets, indices.size());
  check_indices("neighbor-sum", indices, h.rows());
  if (weights.size() != indices.size()) fail("neighbor-sum", "one weight per index required");
  const std::size_t segs = offsets.size() - 1, d = h.cols();
  Tensor out = result({segs, d}, {&h});
  const auto& kt = kernels::active();
  for (std::size_t s = 0; s < segs; ++s)
    for (Index e = offsets[s]; e < offsets[s + 1]; ++e)
      kt.axpy(d, weights[e], h.data().data() + indices[e] * d, out.data().data() + s * d);
  push(OpKind::kNeighborSum, out,
       [h, off = to_vec(offsets), idx = to_vec(indices), w = std::vector<double>(weights.begin(), weights.end()),
        segs, d](std::span<const double> g) mutable {
         double* gh = grad_ptr(h);
         if (!gh) return;
         for (std::size_t s = 0; s < segs; ++s)
           for (Index e = off[s]; e < off[s + 1]; ++e) kernels::active().axpy(d, w[e], g.data() + s * d, gh + idx[e] * d);
       });
  return out;
}

Tensor Tape::neighbor_sum(const Tensor& h, std::span<const Index> offsets, std::span<const Index> indices,
                          const Tensor& weights) {
  require_matrix("neighbor-sum", h);
  require_matrix("neighbor-sum", weights);
  check_offsets("neighbor-sum", offsets, indices.size());
  check_indices("neighbor-sum", indices, h.rows());
  if (weights.rows() != indices.size() || weights.cols() != 1) {
    fail("neighbor-sum", "weights " + shape_to_string(weights.shape()) + " must be [" +
                             std::to_string(indices.size()) + "x1]");
  }
  const std::size_t segs = offsets.size() - 1, d = h.cols();
  Tensor out = result({segs, d}, {&h, &weights});
  const auto& kt = kernels::active();
  auto w = weights.data();
  for (std::size_t s = 0; s < segs; ++s)
    for (Index e = offsets[s]; e < offsets[s + 1]; ++e)
      kt.axpy(d, w[e], h.data().data() + indices[e] * d, out.data().data() + s * d);
  push(OpKind::kNeighborSum, out,
       [h, weights, off = to_vec(offsets), idx = to_vec(indices), segs, d](std::span<const double> g) mutable {
         const auto& kt = kernels::active();
         double* gh = grad_ptr(h);
         double* gw = grad_ptr(weights);
         auto w = weights.data();
         for (std::size_t s = 0; s < segs; ++s) {
           for (Index e = off[s]; e < off[s + 1]; ++e) {
             if (gh) kt.axpy(d, w[e], g.data() + s * d, gh + idx[e] * d);
             if (gw) gw[e] += kt.dot(d, g.data() + s * d, h.data().data() + idx[e] * d);
           }
         }
       });
  return out;
}

Tensor Tape::neighbor_max(const Tensor& h, std::span<const Index> offsets, std::span<const Index> indices) {
  require_matrix("neighbor-max", h);
  check_offsets("neighbor-max", offsets, indices.size());
  check_indices("neighbor-max", indices, h.rows());
  const std::size_t segs = offsets.size() - 1, d = h.cols();
  Tensor out = result({segs, d}, {&h});
  std::vector<Index> arg(segs * d, -1);
  auto v = h.data();
  auto o = out.data();
  for (std::size_t s = 0; s < segs; ++s) {
    for (Index e = offsets[s]; e < offsets[s + 1]; ++e) {
      const Index u = indices[e];
      for (std::size_t j = 0; j < d; ++j) {
        Index& best = arg[s * d + j];
        if (best < 0 || v[u * d + j] > v[best * d + j]) best = u;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const Index best = arg[s * d + j];
      o[s * d + j] = best < 0 ? 0.0 : v[best * d + j];
    }
  }
  push(OpKind::kNeighborMax, out, [h, arg = std::move(arg), d](std::span<const double> g) mutable {
    double* gh = grad_ptr(h);
    if (!gh) return;
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (arg[i] >= 0) gh[arg[i] * d + i % d] += g[i];
    }
  });
  return out;
}

Tensor Tape::dropout(const Tensor& a, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) fail("dropout", "rate must lie in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return a;
  Tensor out = result(a.shape(), {&a});
  const double keep = 1.0 - rate;
  std::bernoulli_distribution coin(keep);
  std::vector<double> mask(a.numel());
  for (auto& m : mask) m = coin(rng) ? 1.0 / keep : 0.0;
  kernels::active().mul(a.numel(), a.data().data(), mask.data(), out.data().data());
  push(OpKind::kDropout, out, [a, mask = std::move(mask)](std::span<const double> g) mutable {
    if (double* ga = grad_ptr(a)) kernels::active().mul_acc(g.size(), g.data(), mask.data(), ga);
  });
  return out;
}

Tensor Tape::maximum(const Tensor& a, const Tensor& b) {
  require_same("maximum", a, b);
  Tensor out = result(a.shape(), {&a, &b});
  auto x = a.data(), y = b.data();
  auto o = out.data();
  std::copy(x.begin(), x.end(), o.begin());
  kernels::active().max_inplace(o.size(), y.data(), o.data());
  push(OpKind::kMaximum, out, [a, b](std::span<const double> g) mutable {
    double* ga = grad_ptr(a);
    double* gb = grad_ptr(b);
    auto x = a.data(), y = b.data();
    // Ties route the gradient to the first operand.
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > x[i]) {
        if (gb) gb[i] += g[i];
      } else if (ga) {
        ga[i] += g[i];
      }
    }
  });
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  if (!a.defined()) fail("sum", "undefined input tensor");
  Tensor out = result({1, 1}, {&a});
  double s = 0.0;
  for (double v : a.data()) s += v;
  out.data()[0] = s;
  push(OpKind::kSum, out, [a](std::span<const double> g) mutable {
    if (double* ga = grad_ptr(a)) for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g[0];
  });
  return out;
}

Tensor Tape::mean(const Tensor& a) {
  if (!a.defined()) fail("mean", "undefined input tensor");
  Tensor out = result({1, 1}, {&a});
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  out.data()[0] = s * inv;
  push(OpKind::kMean, out, [a, inv](std::span<const double> g) mutable {
    if (double* ga = grad_ptr(a)) for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g[0] * inv;
  });
  return out;
}

Tensor Tape::row_sum(const Tensor& a) {
  require_matrix("row-sum", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = result({m, 1}, {&a});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a.data()[i * n + j];
    out.data()[i] = s;
  }
  push(OpKind::kRowSum, out, [a, m, n](std::span<const double> g) mutable {
    if (double* ga = grad_ptr(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
  });
  return out;
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix("slice-cols", a);
  if (begin >= end || end > a.cols()) {
    fail("slice-cols", "invalid column range [" + std::to_string(begin) + "," + std::to_string(end) +
                           ") for " + shape_to_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  Tensor out = result({m, w}, {&a});
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.data().begin() + i * n + begin, w, out.data().begin() + i * w);
  push(OpKind::kSliceCols, out, [a, m, n, w, begin](std::span<const double> g) mutable {
    if (double* ga = grad_ptr(a))
      for (std::size_t i = 0; i < m; ++i) kernels::active().axpy(w, 1.0, g.data() + i * w, ga + i * n + begin);
  });
  return out;
}

Tensor Tape::element(const Tensor& a, std::size_t row, std::size_t col) {
  require_matrix("element", a);
  if (row >= a.rows() || col >= a.cols()) {
    fail("element", "(" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                        shape_to_string(a.shape()));
  }
  Tensor out = result({1, 1}, {&a});
  const std::size_t flat = row * a.cols() + col;
  out.data()[0] = a.data()[flat];
  push(OpKind::kElement, out, [a, flat](std::span<const double> g) mutable {
    if (double* ga = grad_ptr(a)) ga[flat] += g[0];
  });
  return out;
}

Tensor Tape::softmax_cross_entropy(const Tensor& logits, std::span<const Index> rows, std::span<const int> labels) {
  require_matrix("softmax-cross-entropy", logits);
  check_indices("softmax-cross-entropy", rows, logits.rows());
  if (rows.empty()) fail("softmax-cross-entropy", "no rows selected");
  if (labels.size() != rows.size()) fail("softmax-cross-entropy", "one label per selected row required");
  const std::size_t c = logits.cols();
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      fail("softmax-cross-entropy", "label " + std::to_string(y) + " out of range for " + std::to_string(c) + " classes");
    }
  }
  Tensor out = result({1, 1}, {&logits});
  auto x = logits.data();
  std::vector<double> probs(rows.size() * c);
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* row = x.data() + rows[i] * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (probs[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    total += -(row[labels[i]] - mx - std::log(z));
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  out.data()[0] = total * inv;
  push(OpKind::kSoftmaxCrossEntropy, out,
       [logits, idx = to_vec(rows), lab = std::vector<int>(labels.begin(), labels.end()), probs = std::move(probs), c,
        inv](std::span<const double> g) mutable {
         double* gl = grad_ptr(logits);
         if (!gl) return;
         for (std::size_t i = 0; i < idx.size(); ++i) {
           double* gr = gl + idx[i] * c;
           for (std::size_t j = 0; j < c; ++j) {
             const double t = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
             gr[j] += g[0] * inv * (probs[i * c + j] - t);
           }
         }
       });
  return out;
}

Tensor Tape::sigmoid_bce(const Tensor& logits, std::span<const Index> rows, std::span<const double> targets) {
  require_matrix("sigmoid-bce", logits);
  check_indices("sigmoid-bce", rows, logits.rows());
  if (rows.empty()) fail("sigmoid-bce", "no rows selected");
  if (targets.size() != logits.numel()) fail("sigmoid-bce", "targets must match the logits shape");
  const std::size_t c = logits.cols();
  Tensor out = result({1, 1}, {&logits});
  auto x = logits.data();
  double total = 0.0;
  for (Index r : rows) {
    for (std::size_t j = 0; j < c; ++j) {
      const double z = x[r * c + j], t = targets[r * c + j];
      total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
  }
  const double inv = 1.0 / static_cast<double>(rows.size() * c);
  out.data()[0] = total * inv;
  push(OpKind::kSigmoidBce, out,
       [logits, idx = to_vec(rows), t = std::vector<double>(targets.begin(), targets.end()), c,
        inv](std::span<const double> g) mutable {
         double* gl = grad_ptr(logits);
         if (!gl) return;
         auto x = logits.data();
         for (Index r : idx) {
           for (std::size_t j = 0; j < c; ++j) {
             const double z = x[r * c + j];
             const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
             gl[r * c + j] += g[0] * inv * (p - t[r * c + j]);
           }
         }
       });
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_to_string(loss.shape()));
  }
  std::size_t end = nodes_.size();
  while (end > 0 && !nodes_[end - 1].output.same_storage(loss)) --end;
  if (end == 0) throw std::invalid_argument("backward: loss was not produced by an op on this tape");

  for (auto& n : nodes_) n.output.clear_grad();
  Tensor root = nodes_[end - 1].output;
  root.grad()[0] = 1.0;
  for (std::size_t i = end; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.output.has_grad()) continue;
    n.backward(n.output.grad());
  }
}

}  // namespace snag

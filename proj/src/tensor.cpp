#include "snag/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace snag {

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive: " + shape_to_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<detail::TensorImpl>()) {
  check_shape(shape);
  impl_->data.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_to_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(Shape{rows, cols}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1, 1}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::rows() const { return impl_->shape[0]; }

std::size_t Tensor::cols() const {
  const auto& s = impl_->shape;
  return s.size() == 1 ? 1 : shape_numel(s) / s[0];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double& Tensor::at(std::size_t r, std::size_t c) { return impl_->data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_to_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<double> Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = impl_->shape;
  t.impl_->data = impl_->data;
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

}  // namespace snag

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace snag {

using Shape = std::vector<std::size_t>;
using Index = std::int64_t;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by backward/zero_grad
  bool requires_grad = false;
};
}  // namespace detail

// Reference-counted handle to a dense row-major float64 array. Copies share
// storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                       bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  // Allocates a zero-filled gradient buffer on first access.
  std::span<double> grad();
  // Empty span when no gradient has been allocated.
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  // Deep copy of data (and requires_grad flag); the copy has no gradient.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

}  // namespace snag

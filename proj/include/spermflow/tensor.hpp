#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace spermflow::nn {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct TensorNode;

template <typename T>
struct TensorData {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::shared_ptr<TensorNode<T>> grad_fn;

  // Zero-initialises the gradient on first use.
  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

// One recorded operation: reads the output gradient and accumulates into
// the gradients of `inputs` that require them.
template <typename T>
struct TensorNode {
  std::vector<std::shared_ptr<TensorData<T>>> inputs;
  std::function<void(std::span<const T>)> backward;
};

}  // namespace detail

// Shared handle to a dense row-major buffer; copies alias the same storage.
template <typename T>
class BasicTensor {
 public:
  using Data = detail::TensorData<T>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0), bool requires_grad = false);
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->values.size()); }

  std::span<T> values() { return impl_->values; }
  std::span<const T> values() const { return impl_->values; }
  T item() const;

  // Empty when no gradient has been accumulated.
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad();

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool has_grad_fn() const { return impl_->grad_fn != nullptr; }

  // Reverse-mode sweep from this tensor; the recorded graph is released
  // afterwards. The no-argument form requires a single-element tensor.
  void backward();
  void backward(std::span<const T> seed);

  // Deep copy of the values without graph history.
  BasicTensor clone() const;

  const std::shared_ptr<Data>& impl() const { return impl_; }
  static BasicTensor wrap(std::shared_ptr<Data> impl);

 private:
  std::shared_ptr<Data> impl_;
};

using Tensor = BasicTensor<float>;

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result; records `backward` only when an input needs gradients.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<BasicTensor<T>>& inputs,
                           std::function<void(std::span<const T>)> backward);

}  // namespace spermflow::nn

#include "spermflow/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace spermflow::nn {
namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill, bool requires_grad) : impl_(std::make_shared<Data>()) {
  impl_->values.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad) : impl_(std::make_shared<Data>()) {
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) + " does not match shape " +
                                shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::wrap(std::shared_ptr<Data> impl) {
  BasicTensor t;
  t.impl_ = std::move(impl);
  return t;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (impl_->values.size() != 1) throw std::logic_error("item() on a tensor of shape " + shape_str(impl_->shape));
  return impl_->values[0];
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(impl_->shape, impl_->values, impl_->requires_grad);
}

template <typename T>
void BasicTensor<T>::backward() {
  if (impl_->values.size() != 1) throw std::logic_error("backward() without a seed needs a scalar tensor");
  const T one = T(1);
  backward(std::span<const T>(&one, 1));
}

template <typename T>
void BasicTensor<T>::backward(std::span<const T> seed) {
  if (!impl_->requires_grad) throw std::logic_error("backward() on a tensor that does not require grad");
  if (seed.size() != impl_->values.size()) throw std::invalid_argument("backward seed does not match tensor size");

  // Post-order DFS; reversed it is a topological order from the root.
  std::vector<Data*> order;
  std::unordered_set<Data*> visited;
  std::vector<std::pair<Data*, std::size_t>> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto* fn = node->grad_fn.get();
    if (fn && next < fn->inputs.size()) {
      Data* child = fn->inputs[next++].get();
      if (child->grad_fn && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  auto root_grad = impl_->grad_buffer();
  for (std::size_t i = 0; i < seed.size(); ++i) root_grad[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Data* node = *it;
    if (node->grad_fn && !node->grad.empty()) node->grad_fn->backward(node->grad);
  }
  for (Data* node : order) {
    node->grad_fn.reset();
    if (node != impl_.get()) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<BasicTensor<T>>& inputs,
                           std::function<void(std::span<const T>)> backward) {
  BasicTensor<T> out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const BasicTensor<T>& t) { return t.requires_grad(); });
  if (!needs_grad) return out;
  auto node = std::make_shared<detail::TensorNode<T>>();
  for (const auto& t : inputs) node->inputs.push_back(t.impl());
  node->backward = std::move(backward);
  out.set_requires_grad(true);
  out.impl()->grad_fn = std::move(node);
  return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template BasicTensor<float> make_result(Shape, std::vector<float>, const std::vector<BasicTensor<float>>&,
                                        std::function<void(std::span<const float>)>);
template BasicTensor<double> make_result(Shape, std::vector<double>, const std::vector<BasicTensor<double>>&,
                                         std::function<void(std::span<const double>)>);

}  // namespace spermflow::nn

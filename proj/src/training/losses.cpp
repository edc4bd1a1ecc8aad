#include <cmath>
#include <numeric>

#include "spermflow/errors.hpp"
#include "spermflow/training.hpp"

namespace spermflow::training {

template <typename T>
nn::BasicTensor<T> mse_loss(const nn::BasicTensor<T>& pred, const nn::BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw InputError("mse_loss: shape mismatch " + nn::shape_str(pred.shape()) + " vs " +
                     nn::shape_str(target.shape()));
  }
  const auto n = static_cast<std::size_t>(pred.numel());
  if (n == 0) throw InputError("mse_loss: empty input");
  auto p = pred.values();
  auto t = target.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    sum += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  auto pred_impl = pred.impl();
  auto target_impl = target.impl();
  return nn::make_result<T>({1}, {static_cast<T>(sum * inv_n)}, {pred},
                            [pred_impl, target_impl, inv_n](std::span<const T> g) {
                              auto grad = pred_impl->grad_buffer();
                              const double scale = 2.0 * inv_n * static_cast<double>(g[0]);
                              for (std::size_t i = 0; i < grad.size(); ++i) {
                                const double d = static_cast<double>(pred_impl->values[i]) -
                                                 static_cast<double>(target_impl->values[i]);
                                grad[i] += static_cast<T>(scale * d);
                              }
                            });
}

template nn::BasicTensor<float> mse_loss(const nn::BasicTensor<float>&, const nn::BasicTensor<float>&);
template nn::BasicTensor<double> mse_loss(const nn::BasicTensor<double>&, const nn::BasicTensor<double>&);

double mae(std::span<const float> pred, std::span<const float> target) {
  if (pred.size() != target.size()) throw InputError("mae: size mismatch");
  if (pred.empty()) throw InputError("mae: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += std::abs(static_cast<double>(pred[i]) - static_cast<double>(target[i]));
  }
  return sum / static_cast<double>(pred.size());
}

double mae(const nn::Tensor& pred, const nn::Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw InputError("mae: shape mismatch " + nn::shape_str(pred.shape()) + " vs " + nn::shape_str(target.shape()));
  }
  return mae(pred.values(), target.values());
}

std::array<double, 3> aggregate_video_prediction(std::span<const std::array<double, 3>> chunk_predictions) {
  if (chunk_predictions.empty()) throw InputError("cannot aggregate an empty list of chunk predictions");
  std::array<double, 3> mean{};
  for (const auto& p : chunk_predictions) {
    for (int k = 0; k < 3; ++k) mean[k] += p[k];
  }
  for (auto& m : mean) m /= static_cast<double>(chunk_predictions.size());
  return mean;
}

}  // namespace spermflow::training

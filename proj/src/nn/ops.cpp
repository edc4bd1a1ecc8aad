#include "spermflow/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

namespace spermflow::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

struct ConvGeometry {
  std::int64_t channels, height, width, kernel_h, kernel_w, out_h, out_w;
  int stride, padding;
  std::int64_t col_rows() const { return channels * kernel_h * kernel_w; }
  std::int64_t col_cols() const { return out_h * out_w; }
};

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const std::int64_t cols = g.col_cols();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::int64_t kj = 0; kj < g.kernel_w; ++kj) {
        T* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * cols;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ki;
          T* out = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(out, out + g.out_w, T(0));
            continue;
          }
          const T* in = image + (c * g.height + iy) * g.width;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kj;
            out[ox] = (ix >= 0 && ix < g.width) ? in[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
  const std::int64_t cols = g.col_cols();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::int64_t kj = 0; kj < g.kernel_w; ++kj) {
        const T* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * cols;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= g.height) continue;
          T* out = image + (c * g.height + iy) * g.width;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kj;
            if (ix >= 0 && ix < g.width) out[ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::int64_t conv_output_size(std::int64_t input, std::int64_t kernel, int stride, int padding) {
  require(stride >= 1 && padding >= 0, "stride must be >= 1 and padding >= 0");
  const std::int64_t span = input + 2 * padding - kernel;
  require(span >= 0, "kernel " + std::to_string(kernel) + " larger than padded input " + std::to_string(input));
  return span / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, Conv2dOptions options) {
  require(input.rank() == 4, "conv2d input must be [N,C,H,W], got " + shape_str(input.shape()));
  require(weight.rank() == 4, "conv2d weight must be [K,C,kh,kw], got " + shape_str(weight.shape()));
  require(input.dim(1) == weight.dim(1), "conv2d channel mismatch: input " + shape_str(input.shape()) +
                                             " vs weight " + shape_str(weight.shape()));
  const std::int64_t batch = input.dim(0);
  const std::int64_t filters = weight.dim(0);
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), weight.dim(2), weight.dim(3), 0, 0,
                 options.stride, options.padding};
  g.out_h = conv_output_size(g.height, g.kernel_h, options.stride, options.padding);
  g.out_w = conv_output_size(g.width, g.kernel_w, options.stride, options.padding);

  const std::int64_t in_plane = g.channels * g.height * g.width;
  const std::int64_t out_plane = filters * g.col_cols();
  std::vector<T> out(static_cast<std::size_t>(batch * out_plane));
  std::vector<T> col(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
  const ConstMatMap<T> w(weight.values().data(), filters, g.col_rows());
  for (std::int64_t n = 0; n < batch; ++n) {
    im2col(input.values().data() + n * in_plane, g, col.data());
    MatMap<T> y(out.data() + n * out_plane, filters, g.col_cols());
    y.noalias() = w * ConstMatMap<T>(col.data(), g.col_rows(), g.col_cols());
  }

  auto x_data = input.impl();
  auto w_data = weight.impl();
  return make_result<T>(
      {batch, filters, g.out_h, g.out_w}, std::move(out), {input, weight},
      [x_data, w_data, g, batch, filters, in_plane, out_plane](std::span<const T> dy) {
        std::vector<T> col(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
        std::vector<T> dcol(x_data->requires_grad ? col.size() : 0);
        const ConstMatMap<T> w(w_data->values.data(), filters, g.col_rows());
        for (std::int64_t n = 0; n < batch; ++n) {
          const ConstMatMap<T> dy_n(dy.data() + n * out_plane, filters, g.col_cols());
          if (w_data->requires_grad) {
            im2col(x_data->values.data() + n * in_plane, g, col.data());
            MatMap<T> dw(w_data->grad_buffer().data(), filters, g.col_rows());
            dw.noalias() += dy_n * ConstMatMap<T>(col.data(), g.col_rows(), g.col_cols()).transpose();
          }
          if (x_data->requires_grad) {
            MatMap<T>(dcol.data(), g.col_rows(), g.col_cols()).noalias() = w.transpose() * dy_n;
            col2im_add(dcol.data(), g, x_data->grad_buffer().data() + n * in_plane);
          }
        }
      });
}

template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                            BasicTensor<T>& running_mean, BasicTensor<T>& running_var, bool training,
                            double momentum, double eps) {
  require(input.rank() == 4, "batch_norm2d input must be [N,C,H,W], got " + shape_str(input.shape()));
  const std::int64_t batch = input.dim(0);
  const std::int64_t channels = input.dim(1);
  const std::int64_t plane = input.dim(2) * input.dim(3);
  const std::initializer_list<const BasicTensor<T>*> per_channel{&gamma, &beta, &running_mean, &running_var};
  for (const auto* t : per_channel) {
    require(t->numel() == channels, "batch_norm2d parameter of shape " + shape_str(t->shape()) + " for " +
                                        std::to_string(channels) + " channels");
  }
  const std::int64_t count = batch * plane;
  require(count > 0, "batch_norm2d on an empty batch");

  std::vector<T> x_hat(static_cast<std::size_t>(input.numel()));
  std::vector<T> inv_std(static_cast<std::size_t>(channels));
  std::vector<T> out(x_hat.size());
  const auto x = input.values();
  for (std::int64_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (training) {
      for (std::int64_t n = 0; n < batch; ++n) {
        const T* p = x.data() + (n * channels + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) mean += p[i];
      }
      mean /= static_cast<double>(count);
      for (std::int64_t n = 0; n < batch; ++n) {
        const T* p = x.data() + (n * channels + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean.values()[c] = static_cast<T>((1.0 - momentum) * running_mean.values()[c] + momentum * mean);
      running_var.values()[c] = static_cast<T>((1.0 - momentum) * running_var.values()[c] + momentum * unbiased);
    } else {
      mean = running_mean.values()[c];
      var = running_var.values()[c];
    }
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[c] = static_cast<T>(istd);
    const double g = gamma.values()[c];
    const double b = beta.values()[c];
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t base = (n * channels + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const double xh = (x[base + i] - mean) * istd;
        x_hat[base + i] = static_cast<T>(xh);
        out[base + i] = static_cast<T>(g * xh + b);
      }
    }
  }

  auto x_data = input.impl();
  auto g_data = gamma.impl();
  auto b_data = beta.impl();
  return make_result<T>(
      input.shape(), std::move(out), {input, gamma, beta},
      [x_data, g_data, b_data, x_hat = std::move(x_hat), inv_std = std::move(inv_std), batch, channels, plane, count,
       training](std::span<const T> dy) {
        for (std::int64_t c = 0; c < channels; ++c) {
          double sum_dy = 0.0;
          double sum_dy_xhat = 0.0;
          for (std::int64_t n = 0; n < batch; ++n) {
            const std::int64_t base = (n * channels + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              sum_dy += dy[base + i];
              sum_dy_xhat += dy[base + i] * x_hat[base + i];
            }
          }
          if (g_data->requires_grad) g_data->grad_buffer()[c] += static_cast<T>(sum_dy_xhat);
          if (b_data->requires_grad) b_data->grad_buffer()[c] += static_cast<T>(sum_dy);
          if (!x_data->requires_grad) continue;
          auto dx = x_data->grad_buffer();
          const double scale = static_cast<double>(g_data->values[c]) * inv_std[c];
          const double mean_dy = sum_dy / count;
          const double mean_dy_xhat = sum_dy_xhat / count;
          for (std::int64_t n = 0; n < batch; ++n) {
            const std::int64_t base = (n * channels + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              const double grad = training ? scale * (dy[base + i] - mean_dy - x_hat[base + i] * mean_dy_xhat)
                                           : scale * dy[base + i];
              dx[base + i] += static_cast<T>(grad);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  const auto x = input.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  auto x_data = input.impl();
  return make_result<T>(input.shape(), std::move(out), {input}, [x_data](std::span<const T> dy) {
    auto dx = x_data->grad_buffer();
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (x_data->values[i] > T(0)) dx[i] += dy[i];
    }
  });
}

template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, int kernel, int stride, int padding) {
  require(input.rank() == 4, "max_pool2d input must be [N,C,H,W], got " + shape_str(input.shape()));
  require(kernel >= 1 && padding * 2 <= kernel, "max_pool2d padding must be at most half the kernel");
  const std::int64_t planes = input.dim(0) * input.dim(1);
  const std::int64_t h = input.dim(2);
  const std::int64_t w = input.dim(3);
  const std::int64_t oh = conv_output_size(h, kernel, stride, padding);
  const std::int64_t ow = conv_output_size(w, kernel, stride, padding);
  std::vector<T> out(static_cast<std::size_t>(planes * oh * ow));
  std::vector<std::int64_t> argmax(out.size());
  const auto x = input.values();
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t best_index = -1;
        for (int ki = 0; ki < kernel; ++ki) {
          const std::int64_t iy = oy * stride - padding + ki;
          if (iy < 0 || iy >= h) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const std::int64_t ix = ox * stride - padding + kj;
            if (ix < 0 || ix >= w) continue;
            const std::int64_t idx = (p * h + iy) * w + ix;
            if (best_index < 0 || x[idx] > best) {
              best = x[idx];
              best_index = idx;
            }
          }
        }
        const std::int64_t o = (p * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = best_index;
      }
    }
  }
  auto x_data = input.impl();
  return make_result<T>({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input},
                        [x_data, argmax = std::move(argmax)](std::span<const T> dy) {
                          auto dx = x_data->grad_buffer();
                          for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
                        });
}

template <typename T>
BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>& input) {
  require(input.rank() == 4, "adaptive_avg_pool2d input must be [N,C,H,W], got " + shape_str(input.shape()));
  const std::int64_t planes = input.dim(0) * input.dim(1);
  const std::int64_t area = input.dim(2) * input.dim(3);
  require(area > 0, "adaptive_avg_pool2d on an empty plane");
  std::vector<T> out(static_cast<std::size_t>(planes));
  const auto x = input.values();
  for (std::int64_t p = 0; p < planes; ++p) {
    double sum = 0.0;
    for (std::int64_t i = 0; i < area; ++i) sum += x[p * area + i];
    out[p] = static_cast<T>(sum / area);
  }
  auto x_data = input.impl();
  return make_result<T>({input.dim(0), input.dim(1), 1, 1}, std::move(out), {input},
                        [x_data, area](std::span<const T> dy) {
                          auto dx = x_data->grad_buffer();
                          for (std::size_t p = 0; p < dy.size(); ++p) {
                            const T g = dy[p] / static_cast<T>(area);
                            for (std::int64_t i = 0; i < area; ++i) dx[p * area + i] += g;
                          }
                        });
}

template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& input) {
  require(input.rank() >= 1, "flatten needs a batch dimension");
  const std::int64_t batch = input.dim(0);
  const std::int64_t rest = batch == 0 ? 0 : input.numel() / batch;
  std::vector<T> out(input.values().begin(), input.values().end());
  auto x_data = input.impl();
  return make_result<T>({batch, rest}, std::move(out), {input}, [x_data](std::span<const T> dy) {
    auto dx = x_data->grad_buffer();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require(input.rank() == 2 && weight.rank() == 2 && bias.rank() == 1, "linear expects [N,in], [out,in], [out]");
  require(input.dim(1) == weight.dim(1) && bias.dim(0) == weight.dim(0),
          "linear shape mismatch: input " + shape_str(input.shape()) + ", weight " + shape_str(weight.shape()) +
              ", bias " + shape_str(bias.shape()));
  const std::int64_t batch = input.dim(0);
  const std::int64_t in = input.dim(1);
  const std::int64_t outs = weight.dim(0);
  std::vector<T> out(static_cast<std::size_t>(batch * outs));
  MatMap<T> y(out.data(), batch, outs);
  y.noalias() = ConstMatMap<T>(input.values().data(), batch, in) *
                ConstMatMap<T>(weight.values().data(), outs, in).transpose();
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t o = 0; o < outs; ++o) y(n, o) += bias.values()[o];
  }
  auto x_data = input.impl();
  auto w_data = weight.impl();
  auto b_data = bias.impl();
  return make_result<T>({batch, outs}, std::move(out), {input, weight, bias},
                        [x_data, w_data, b_data, batch, in, outs](std::span<const T> dy_span) {
                          const ConstMatMap<T> dy(dy_span.data(), batch, outs);
                          if (x_data->requires_grad) {
                            MatMap<T>(x_data->grad_buffer().data(), batch, in).noalias() +=
                                dy * ConstMatMap<T>(w_data->values.data(), outs, in);
                          }
                          if (w_data->requires_grad) {
                            MatMap<T>(w_data->grad_buffer().data(), outs, in).noalias() +=
                                dy.transpose() * ConstMatMap<T>(x_data->values.data(), batch, in);
                          }
                          if (b_data->requires_grad) {
                            auto db = b_data->grad_buffer();
                            for (std::int64_t n = 0; n < batch; ++n) {
                              for (std::int64_t o = 0; o < outs; ++o) db[o] += dy(n, o);
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require(a.shape() == b.shape(), "add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto a_data = a.impl();
  auto b_data = b.impl();
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a_data, b_data](std::span<const T> dy) {
    for (auto* d : {a_data.get(), b_data.get()}) {
      if (!d->requires_grad) continue;
      auto g = d->grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
    }
  });
}

template <typename T>
BasicTensor<T> apply_mask(const BasicTensor<T>& input, std::vector<T> mask) {
  require(static_cast<std::int64_t>(mask.size()) == input.numel(), "mask size does not match input");
  std::vector<T> out(mask.size());
  const auto x = input.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  auto x_data = input.impl();
  return make_result<T>(input.shape(), std::move(out), {input}, [x_data, mask = std::move(mask)](std::span<const T> dy) {
    auto dx = x_data->grad_buffer();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
  });
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& input, double p, bool training, std::mt19937_64& rng) {
  require(p >= 0.0 && p < 1.0, "dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return apply_mask(input, std::vector<T>(static_cast<std::size_t>(input.numel()), T(1)));
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<T> mask(static_cast<std::size_t>(input.numel()));
  for (T& m : mask) m = keep(rng) ? scale : T(0);
  return apply_mask(input, std::move(mask));
}

#define SPERMFLOW_INSTANTIATE_OPS(T)                                                                               \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, Conv2dOptions);                    \
  template BasicTensor<T> batch_norm2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,       \
                                       BasicTensor<T>&, BasicTensor<T>&, bool, double, double);                   \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                            \
  template BasicTensor<T> max_pool2d(const BasicTensor<T>&, int, int, int);                                       \
  template BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>&);                                             \
  template BasicTensor<T> flatten(const BasicTensor<T>&);                                                         \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);            \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                      \
  template BasicTensor<T> apply_mask(const BasicTensor<T>&, std::vector<T>);                                      \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, bool, std::mt19937_64&);

SPERMFLOW_INSTANTIATE_OPS(float)
SPERMFLOW_INSTANTIATE_OPS(double)

}  // namespace spermflow::nn

#pragma once

// Reference implementations written independently of the library code.
// Shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "spermflow/media.hpp"
#include "spermflow/tensor.hpp"

namespace oracles {

struct Quadratic {
  double c, b1, b2, a11, q, a22;  // c + b1 X + b2 Y + a11 X^2 + q XY + a22 Y^2
  double operator()(double x, double y) const { return c + b1 * x + b2 * y + a11 * x * x + q * x * y + a22 * y * y; }
  // c, b1, b2, a11, a12, a22 of the local expansion around (x, y)
  std::vector<double> local_coefficients(double x, double y) const {
    return {(*this)(x, y), b1 + 2 * a11 * x + q * y, b2 + q * x + 2 * a22 * y, a11, q / 2, a22};
  }
};

inline spermflow::media::GrayFrame sample(const Quadratic& f, int w, int h) {
  spermflow::media::GrayFrame g(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g.at(x, y) = static_cast<float>(f(x, y));
  return g;
}

inline double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

// Exhaustive integer search minimising the block SSD, with wraparound.
inline std::pair<int, int> block_match(const spermflow::media::GrayFrame& a, const spermflow::media::GrayFrame& b,
                                       int cx, int cy, int radius, int search) {
  double best = 1e300;
  std::pair<int, int> arg{0, 0};
  for (int dy = -search; dy <= search; ++dy)
    for (int dx = -search; dx <= search; ++dx) {
      double ssd = 0;
      for (int oy = -radius; oy <= radius; ++oy)
        for (int ox = -radius; ox <= radius; ++ox) {
          const int ax = (cx + ox + a.width) % a.width, ay = (cy + oy + a.height) % a.height;
          const int bx = (cx + ox + dx + 2 * b.width) % b.width, by = (cy + oy + dy + 2 * b.height) % b.height;
          const double d = a.at(ax, ay) - b.at(bx, by);
          ssd += d * d;
        }
      if (ssd < best) {
        best = ssd;
        arg = {dx, dy};
      }
    }
  return arg;
}

// Straight nested-loop cross-correlation, zero padding, floor output size.
inline std::vector<double> direct_conv(const spermflow::nn::BasicTensor<double>& x,
                                       const spermflow::nn::BasicTensor<double>& w, int stride, int pad) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto k = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n * k * oh * ow), 0.0);
  for (int b = 0; b < n; ++b)
    for (int f = 0; f < k; ++f)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double s = 0;
          for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const long iy = oy * stride - pad + i, ix = ox * stride - pad + j;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                s += x.values()[((b * c + ch) * h + iy) * wd + ix] * w.values()[((f * c + ch) * kh + i) * kw + j];
              }
          out[((b * k + f) * oh + oy) * ow + ox] = s;
        }
  return out;
}

// Layer-by-layer parameter total for a basic-block ResNet, derived from the
// architecture table rather than from the model object.
inline std::int64_t resnet_parameter_count(int in_channels, std::vector<int> blocks, std::vector<int> widths,
                                           int classes, std::vector<int> mlp = {}) {
  auto conv_bn = [](std::int64_t in, std::int64_t out, std::int64_t k) { return out * in * k * k + 2 * out; };
  std::int64_t total = conv_bn(in_channels, widths[0], 7);
  std::int64_t channels = widths[0];
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    for (int b = 0; b < blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      total += conv_bn(channels, widths[s], 3) + conv_bn(widths[s], widths[s], 3);
      if (stride != 1 || channels != widths[s]) total += conv_bn(channels, widths[s], 1);
      channels = widths[s];
    }
  }
  for (int w : mlp) {
    total += channels * w + w;
    channels = w;
  }
  return total + channels * classes + classes;
}

// Scalar Adam with bias correction.
struct AdamRecurrence {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g) {
    ++t;
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g * g;
    return x - lr * (m / (1 - std::pow(beta1, t))) / (std::sqrt(v / (1 - std::pow(beta2, t))) + eps);
  }
};

}  // namespace oracles

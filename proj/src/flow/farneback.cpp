#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "spermflow/errors.hpp"
#include "spermflow/flow.hpp"

namespace spermflow::flow {

using media::GrayFrame;

namespace {

// Pyramid levels narrower than this are skipped.
constexpr int kMinPyramidSize = 32;

// Added to the 2x2 normal-equation determinant; sized for unit-range luma.
constexpr double kDetRegularizer = 1e-3 / (255.0 * 255.0 * 255.0 * 255.0);

// Correlates an interleaved multi-channel plane with kx along rows and ky
// along columns. Borders replicate the edge sample.
std::vector<double> separable_filter(const std::vector<double>& src, int width, int height, int channels,
                                     const std::vector<double>& kx, const std::vector<double>& ky) {
  const int rx = static_cast<int>(kx.size()) / 2;
  const int ry = static_cast<int>(ky.size()) / 2;
  std::vector<double> tmp(src.size());
  for (int y = 0; y < height; ++y) {
    const double* row = src.data() + static_cast<std::size_t>(y) * width * channels;
    double* out = tmp.data() + static_cast<std::size_t>(y) * width * channels;
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int k = -rx; k <= rx; ++k) {
          const int xx = std::clamp(x + k, 0, width - 1);
          acc += kx[k + rx] * row[xx * channels + c];
        }
        out[x * channels + c] = acc;
      }
    }
  }
  std::vector<double> dst(src.size());
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    double* out = dst.data() + y * stride;
    for (int k = -ry; k <= ry; ++k) {
      const int yy = std::clamp(y + k, 0, height - 1);
      const double w = ky[k + ry];
      const double* in = tmp.data() + yy * stride;
      for (std::size_t i = 0; i < stride; ++i) out[i] += w * in[i];
    }
  }
  return dst;
}

std::vector<double> gaussian_kernel(int radius, double sigma) {
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-(k * k) / (2.0 * sigma * sigma));
    sum += kernel[k + radius];
  }
  for (double& w : kernel) w /= sum;
  return kernel;
}

GrayFrame gaussian_blur(const GrayFrame& frame, double sigma) {
  const int ksize = std::max(3, static_cast<int>(std::lround(sigma * 5)) | 1);
  const auto kernel = gaussian_kernel(ksize / 2, sigma);
  const std::vector<double> src(frame.data.begin(), frame.data.end());
  const auto blurred = separable_filter(src, frame.width, frame.height, 1, kernel, kernel);
  GrayFrame out(frame.width, frame.height);
  for (std::size_t i = 0; i < blurred.size(); ++i) out.data[i] = static_cast<float>(std::clamp(blurred[i], 0.0, 1.0));
  return out;
}

void check_finite(const GrayFrame& frame, const char* what) {
  for (float v : frame.data) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + what + " frame");
  }
}

// Bilinear sample of all expansion coefficients at a real position, with
// coordinates clamped into the frame.
void sample_expansion(const PolyExpansion& poly, double fx, double fy, float out[PolyExpansion::kCount]) {
  fx = std::clamp(fx, 0.0, static_cast<double>(poly.width - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(poly.height - 1));
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, poly.width - 1);
  const int y1 = std::min(y0 + 1, poly.height - 1);
  const float ax = static_cast<float>(fx - x0);
  const float ay = static_cast<float>(fy - y0);
  const auto stride = static_cast<std::size_t>(poly.width);
  const float* p00 = &poly.coeffs[(y0 * stride + x0) * PolyExpansion::kCount];
  const float* p01 = &poly.coeffs[(y0 * stride + x1) * PolyExpansion::kCount];
  const float* p10 = &poly.coeffs[(y1 * stride + x0) * PolyExpansion::kCount];
  const float* p11 = &poly.coeffs[(y1 * stride + x1) * PolyExpansion::kCount];
  for (int k = 0; k < PolyExpansion::kCount; ++k) {
    const float top = p00[k] + ax * (p01[k] - p00[k]);
    const float bottom = p10[k] + ax * (p11[k] - p10[k]);
    out[k] = top + ay * (bottom - top);
  }
}

// Per pixel: [G11, G12, G22, H1, H2] of the normal equations A^T A d = A^T db.
constexpr int kMatrixChannels = 5;

std::vector<double> update_matrices(const PolyExpansion& r0, const PolyExpansion& r1, const FlowField& flow) {
  std::vector<double> m(static_cast<std::size_t>(r0.width) * r0.height * kMatrixChannels);
  float sampled[PolyExpansion::kCount];
  for (int y = 0; y < r0.height; ++y) {
    for (int x = 0; x < r0.width; ++x) {
      const double u = flow.u(x, y);
      const double v = flow.v(x, y);
      sample_expansion(r1, x + u, y + v, sampled);
      const double axx = 0.5 * (r0.at(x, y, PolyExpansion::kA11) + sampled[PolyExpansion::kA11]);
      const double axy = 0.5 * (r0.at(x, y, PolyExpansion::kA12) + sampled[PolyExpansion::kA12]);
      const double ayy = 0.5 * (r0.at(x, y, PolyExpansion::kA22) + sampled[PolyExpansion::kA22]);
      const double hx = 0.5 * (r0.at(x, y, PolyExpansion::kB1) - sampled[PolyExpansion::kB1]) + axx * u + axy * v;
      const double hy = 0.5 * (r0.at(x, y, PolyExpansion::kB2) - sampled[PolyExpansion::kB2]) + axy * u + ayy * v;
      double* out = &m[(static_cast<std::size_t>(y) * r0.width + x) * kMatrixChannels];
      out[0] = axx * axx + axy * axy;
      out[1] = axy * (axx + ayy);
      out[2] = axy * axy + ayy * ayy;
      out[3] = axx * hx + axy * hy;
      out[4] = axy * hx + ayy * hy;
    }
  }
  return m;
}

void solve_flow(const std::vector<double>& m, FlowField& flow) {
  const std::size_t pixels = static_cast<std::size_t>(flow.width) * flow.height;
  for (std::size_t i = 0; i < pixels; ++i) {
    const double* g = &m[i * kMatrixChannels];
    const double inv_det = 1.0 / (g[0] * g[2] - g[1] * g[1] + kDetRegularizer);
    flow.data[2 * i] = static_cast<float>((g[2] * g[3] - g[1] * g[4]) * inv_det);
    flow.data[2 * i + 1] = static_cast<float>((g[0] * g[4] - g[1] * g[3]) * inv_det);
  }
}

FlowField resize_flow(const FlowField& flow, int width, int height) {
  FlowField out(width, height);
  out.data = media::resize_plane(flow.data, flow.width, flow.height, 2, width, height);
  const float sx = static_cast<float>(width) / flow.width;
  const float sy = static_cast<float>(height) / flow.height;
  for (std::size_t i = 0; i < out.data.size(); i += 2) {
    out.data[i] *= sx;
    out.data[i + 1] *= sy;
  }
  return out;
}

}  // namespace

void FarnebackParams::validate() const {
  if (!(pyr_scale > 0.0 && pyr_scale < 1.0)) throw InputError("pyr_scale must lie in (0, 1)");
  if (levels < 1) throw InputError("levels must be >= 1");
  if (winsize < 3 || winsize % 2 == 0) throw InputError("winsize must be odd and >= 3");
  if (iterations < 1) throw InputError("iterations must be >= 1");
  if (poly_n != 5 && poly_n != 7) throw InputError("poly_n must be 5 or 7");
  if (!(poly_sigma > 0.0)) throw InputError("poly_sigma must be positive");
}

FlowField::FlowField(int w, int h) : width(w), height(h) {
  if (w < 1 || h < 1) throw InputError("flow dimensions must be positive");
  data.assign(static_cast<std::size_t>(w) * h * 2, 0.0f);
}

void FlowField::validate() const {
  if (width < 1 || height < 1 || data.size() != static_cast<std::size_t>(width) * height * 2) {
    throw InputError("flow buffer does not match its dimensions");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw NumericalError("non-finite flow vector");
  }
}

PolyExpansion polynomial_expansion(const GrayFrame& frame, const FarnebackParams& params) {
  params.validate();
  if (frame.width < params.poly_n || frame.height < params.poly_n) {
    throw InputError("frame " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                     " is smaller than poly_n " + std::to_string(params.poly_n));
  }
  const int radius = params.poly_n / 2;
  std::vector<double> g(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) {
    g[k + radius] = std::exp(-(k * k) / (2.0 * params.poly_sigma * params.poly_sigma));
  }

  // Weighted Gram matrix of the basis {1, x, y, x^2, xy, y^2}; identical at
  // every pixel because borders replicate samples rather than drop them.
  Eigen::Matrix<double, 6, 6> gram = Eigen::Matrix<double, 6, 6>::Zero();
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      Eigen::Matrix<double, 6, 1> phi;
      phi << 1.0, dx, dy, dx * dx, dx * dy, dy * dy;
      gram += g[dx + radius] * g[dy + radius] * phi * phi.transpose();
    }
  }
  const Eigen::Matrix<double, 6, 6> gram_inv = gram.inverse();

  const int w = frame.width;
  const int h = frame.height;
  // Column pass: weighted moments of order 0, 1, 2 in y.
  std::vector<double> vert(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double m0 = 0.0, m1 = 0.0, m2 = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const double f = g[k + radius] * frame.at(x, std::clamp(y + k, 0, h - 1));
        m0 += f;
        m1 += k * f;
        m2 += k * k * f;
      }
      double* out = &vert[(static_cast<std::size_t>(y) * w + x) * 3];
      out[0] = m0;
      out[1] = m1;
      out[2] = m2;
    }
  }

  PolyExpansion poly;
  poly.width = w;
  poly.height = h;
  poly.coeffs.resize(static_cast<std::size_t>(w) * h * PolyExpansion::kCount);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Eigen::Matrix<double, 6, 1> moments = Eigen::Matrix<double, 6, 1>::Zero();
      for (int k = -radius; k <= radius; ++k) {
        const double* v = &vert[(static_cast<std::size_t>(y) * w + std::clamp(x + k, 0, w - 1)) * 3];
        const double gk = g[k + radius];
        moments[0] += gk * v[0];
        moments[1] += gk * k * v[0];
        moments[2] += gk * v[1];
        moments[3] += gk * k * k * v[0];
        moments[4] += gk * k * v[1];
        moments[5] += gk * v[2];
      }
      const Eigen::Matrix<double, 6, 1> fit = gram_inv * moments;
      float* out = &poly.coeffs[(static_cast<std::size_t>(y) * w + x) * PolyExpansion::kCount];
      out[PolyExpansion::kC] = static_cast<float>(fit[0]);
      out[PolyExpansion::kB1] = static_cast<float>(fit[1]);
      out[PolyExpansion::kB2] = static_cast<float>(fit[2]);
      out[PolyExpansion::kA11] = static_cast<float>(fit[3]);
      out[PolyExpansion::kA12] = static_cast<float>(0.5 * fit[4]);
      out[PolyExpansion::kA22] = static_cast<float>(fit[5]);
    }
  }
  return poly;
}

FlowField estimate_flow(const GrayFrame& prev, const GrayFrame& next, const FarnebackParams& params,
                        const std::optional<FlowField>& initial) {
  params.validate();
  if (prev.size() != next.size()) {
    throw InputError("frame size mismatch: " + std::to_string(prev.width) + "x" + std::to_string(prev.height) +
                     " vs " + std::to_string(next.width) + "x" + std::to_string(next.height));
  }
  check_finite(prev, "previous");
  check_finite(next, "next");
  if (initial) {
    if (initial->width != prev.width || initial->height != prev.height) {
      throw InputError("initial flow size does not match the frames");
    }
    initial->validate();
  }

  int levels = 1;
  double scale = 1.0;
  for (; levels < params.levels; ++levels) {
    scale *= params.pyr_scale;
    if (prev.width * scale < kMinPyramidSize || prev.height * scale < kMinPyramidSize) break;
  }

  const std::vector<double> box(static_cast<std::size_t>(params.winsize), 1.0 / params.winsize);
  FlowField flow;
  for (int level = levels - 1; level >= 0; --level) {
    const double level_scale = std::pow(params.pyr_scale, level);
    const int width = std::max(1, static_cast<int>(std::lround(prev.width * level_scale)));
    const int height = std::max(1, static_cast<int>(std::lround(prev.height * level_scale)));

    GrayFrame prev_level = prev;
    GrayFrame next_level = next;
    if (level > 0) {
      const double sigma = (1.0 / level_scale - 1.0) * 0.5;
      prev_level = media::resize_bilinear(gaussian_blur(prev, sigma), width, height);
      next_level = media::resize_bilinear(gaussian_blur(next, sigma), width, height);
    }

    if (flow.data.empty()) {
      flow = initial ? resize_flow(*initial, width, height) : FlowField(width, height);
    } else {
      flow = resize_flow(flow, width, height);
    }

    const PolyExpansion r0 = polynomial_expansion(prev_level, params);
    const PolyExpansion r1 = polynomial_expansion(next_level, params);
    std::vector<double> matrices = update_matrices(r0, r1, flow);
    for (int it = 0; it < params.iterations; ++it) {
      solve_flow(separable_filter(matrices, width, height, kMatrixChannels, box, box), flow);
      if (it + 1 < params.iterations) matrices = update_matrices(r0, r1, flow);
    }
  }
  flow.validate();
  return flow;
}

}  // namespace spermflow::flow

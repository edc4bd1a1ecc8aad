#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "spermflow/media.hpp"

namespace spermflow::flow {

struct FarnebackParams {
  double pyr_scale = 0.5;
  int levels = 3;
  int winsize = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.2;

  void validate() const;
  friend bool operator==(const FarnebackParams&, const FarnebackParams&) = default;
};

// Per-pixel local quadratic model f(p) ~ p^T A p + b^T p + c in pixel
// offsets from the pixel centre (x to the right, y down).
struct PolyExpansion {
  enum Coef { kC = 0, kB1, kB2, kA11, kA12, kA22, kCount };

  int width = 0;
  int height = 0;
  std::vector<float> coeffs;  // kCount values per pixel

  float at(int x, int y, Coef k) const { return coeffs[(static_cast<std::size_t>(y) * width + x) * kCount + k]; }
};

// Per-pixel displacement in pixels: prev(x, y) ~ next(x + u, y + v).
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // interleaved (u, v)

  FlowField() = default;
  FlowField(int w, int h);

  float& u(int x, int y) { return data[2 * (static_cast<std::size_t>(y) * width + x)]; }
  float& v(int x, int y) { return data[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }
  float u(int x, int y) const { return data[2 * (static_cast<std::size_t>(y) * width + x)]; }
  float v(int x, int y) const { return data[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }
  void validate() const;
};

PolyExpansion polynomial_expansion(const media::GrayFrame& frame, const FarnebackParams& params);

FlowField estimate_flow(const media::GrayFrame& prev, const media::GrayFrame& next, const FarnebackParams& params,
                        const std::optional<FlowField>& initial = std::nullopt);

// Hue encodes direction, value the per-field min-max normalised magnitude.
media::PixelFrame flow_to_rgb(const FlowField& flow);

// Middlebury-style dump: "PIEH", i32 width, i32 height, interleaved f32 (u, v).
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

}  // namespace spermflow::flow

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "spermflow/binary_io.hpp"
#include "spermflow/errors.hpp"
#include "spermflow/flow.hpp"

namespace spermflow::flow {
namespace {

// Full-saturation HSV to RGB; hue in degrees [0, 360), value in [0, 1].
void hsv_to_rgb(double hue, double value, std::uint8_t rgb[3]) {
  const double sector = hue / 60.0;
  const int index = static_cast<int>(sector) % 6;
  const double frac = sector - std::floor(sector);
  const double rising = value * frac;
  const double falling = value * (1.0 - frac);
  double r = 0, g = 0, b = 0;
  switch (index) {
    case 0: r = value; g = rising; break;
    case 1: r = falling; g = value; break;
    case 2: g = value; b = rising; break;
    case 3: g = falling; b = value; break;
    case 4: r = rising; b = value; break;
    default: r = value; b = falling; break;
  }
  rgb[0] = static_cast<std::uint8_t>(std::lround(r * 255.0));
  rgb[1] = static_cast<std::uint8_t>(std::lround(g * 255.0));
  rgb[2] = static_cast<std::uint8_t>(std::lround(b * 255.0));
}

}  // namespace

media::PixelFrame flow_to_rgb(const FlowField& flow) {
  flow.validate();
  const std::size_t pixels = static_cast<std::size_t>(flow.width) * flow.height;
  std::vector<double> magnitude(pixels);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t i = 0; i < pixels; ++i) {
    magnitude[i] = std::hypot(static_cast<double>(flow.data[2 * i]), static_cast<double>(flow.data[2 * i + 1]));
    lo = std::min(lo, magnitude[i]);
    hi = std::max(hi, magnitude[i]);
  }

  media::PixelFrame image(flow.width, flow.height);
  for (std::size_t i = 0; i < pixels; ++i) {
    double value = 0.0;
    if (hi > lo) {
      value = (magnitude[i] - lo) / (hi - lo);
    } else if (hi > 0.0) {
      value = 1.0;  // every vector has the same non-zero length
    }
    double hue = std::atan2(static_cast<double>(flow.data[2 * i + 1]), static_cast<double>(flow.data[2 * i])) *
                 180.0 / std::numbers::pi;
    if (hue < 0.0) hue += 360.0;
    if (hue >= 360.0) hue = 0.0;
    hsv_to_rgb(hue, value, &image.data[3 * i]);
  }
  return image;
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  flow.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write("PIEH", 4);
  io::write_i32(out, flow.width);
  io::write_i32(out, flow.height);
  io::write_f32_array(out, flow.data);
  if (!out) throw InputError("failed writing " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "PIEH") throw InputError("bad .flo magic in " + path.string());
  const int width = io::read_i32(in);
  const int height = io::read_i32(in);
  if (width < 1 || height < 1 || width > (1 << 16) || height > (1 << 16)) {
    throw InputError("implausible .flo dimensions in " + path.string());
  }
  FlowField flow(width, height);
  io::read_f32_array(in, flow.data);
  return flow;
}

}  // namespace spermflow::flow

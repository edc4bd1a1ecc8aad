#include "spermflow/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "spermflow/errors.hpp"

namespace spermflow::fixtures {
namespace {

enum class Motion { Progressive, NonProgressive, Immotile };

struct Dot {
  double x, y, dx, dy;
  Motion motion;
};

double wrap(double v, double size) {
  v = std::fmod(v, size);
  return v < 0 ? v + size : v;
}

void splat(media::PixelFrame& frame, double cx, double cy, double radius) {
  const int r = static_cast<int>(std::ceil(radius + 1));
  for (int oy = -r; oy <= r; ++oy) {
    for (int ox = -r; ox <= r; ++ox) {
      const int x = (static_cast<int>(std::floor(cx)) + ox + frame.width) % frame.width;
      const int y = (static_cast<int>(std::floor(cy)) + oy + frame.height) % frame.height;
      const double px = std::floor(cx) + ox + 0.5 - cx;
      const double py = std::floor(cy) + oy + 0.5 - cy;
      const double w = std::exp(-(px * px + py * py) / (2.0 * radius * radius / 2.0));
      for (int c = 0; c < 3; ++c) {
        const double tint = c == 2 ? 0.8 : 1.0;
        const int v = frame.at(x, y, c) + static_cast<int>(std::lround(200.0 * tint * w));
        frame.at(x, y, c) = static_cast<std::uint8_t>(std::min(v, 255));
      }
    }
  }
}

}  // namespace

std::vector<media::PixelFrame> render_moving_dots(const MovingDotsOptions& o) {
  if (o.width < 8 || o.height < 8 || o.frames < 1 || o.dots < 0) throw InputError("invalid moving-dot options");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n_prog = static_cast<int>(std::lround(o.dots * o.progressive_fraction));
  const int n_nonprog = static_cast<int>(std::lround(o.dots * o.non_progressive_fraction));

  std::vector<Dot> dots;
  for (int i = 0; i < o.dots; ++i) {
    Dot d{unit(rng) * o.width, unit(rng) * o.height, 0.0, 0.0, Motion::Immotile};
    if (i < n_prog) {
      const double angle = unit(rng) * 2.0 * std::numbers::pi;
      d.dx = o.speed * std::cos(angle);
      d.dy = o.speed * std::sin(angle);
      d.motion = Motion::Progressive;
    } else if (i < n_prog + n_nonprog) {
      d.motion = Motion::NonProgressive;
    }
    dots.push_back(d);
  }

  std::vector<media::PixelFrame> frames;
  frames.reserve(static_cast<std::size_t>(o.frames));
  for (int t = 0; t < o.frames; ++t) {
    media::PixelFrame frame(o.width, o.height);
    for (auto& px : frame.data) px = 12;
    for (const auto& d : dots) splat(frame, d.x, d.y, o.radius);
    frames.push_back(std::move(frame));
    for (auto& d : dots) {
      if (d.motion == Motion::Progressive) {
        d.x = wrap(d.x + d.dx, o.width);
        d.y = wrap(d.y + d.dy, o.height);
      } else if (d.motion == Motion::NonProgressive) {
        d.x = wrap(d.x + (unit(rng) - 0.5) * 1.5, o.width);
        d.y = wrap(d.y + (unit(rng) - 0.5) * 1.5, o.height);
      }
    }
  }
  return frames;
}

std::vector<FixtureVideo> make_fixture_set(int count, std::uint64_t seed, int width, int height, int frames) {
  if (count < 1) throw InputError("fixture set needs at least one video");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<FixtureVideo> out;
  for (int k = 0; k < count; ++k) {
    FixtureVideo v;
    v.options.width = width;
    v.options.height = height;
    v.options.frames = frames;
    v.options.seed = seed * 1000003ULL + static_cast<std::uint64_t>(k);
    // Spread progressive share over the set so targets differ video to video.
    const double prog = count == 1 ? 0.5 : 0.1 + 0.8 * k / (count - 1);
    const double nonprog = (1.0 - prog) * (0.2 + 0.6 * unit(rng));
    v.options.progressive_fraction = prog;
    v.options.non_progressive_fraction = nonprog;

    auto& label = v.label;
    label.video_id = "p" + std::to_string(k) + "_v" + std::to_string(k);
    label.motility = {100.0 * prog, 100.0 * nonprog, 100.0 * (1.0 - prog - nonprog)};
    for (auto& m : label.motility) m = std::round(m * 100.0) / 100.0;
    label.motility[2] = std::round((100.0 - label.motility[0] - label.motility[1]) * 100.0) / 100.0;
    label.morphology = {std::round(10.0 + 60.0 * prog), std::round(5.0 + 30.0 * nonprog), std::round(40.0 * unit(rng))};
    out.push_back(std::move(v));
  }
  return out;
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<dataset::LabelRecord>& labels) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "video_id,progressive,non_progressive,immotile,head_defects,tail_defects,midpiece_neck_defects\n";
  char buf[64];
  for (const auto& l : labels) {
    out << l.video_id;
    for (double v : l.motility) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    for (double v : l.morphology) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

void write_folds_csv(const std::filesystem::path& path, const dataset::FoldAssignment& folds) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "video_id,fold\n";
  for (const auto& [video, fold] : folds.map()) out << video << ',' << fold << '\n';
}

FixturePaths write_fixture_set(const std::filesystem::path& dir, const std::vector<FixtureVideo>& videos) {
  FixturePaths paths{dir / "videos", dir / "labels.csv", dir / "folds.csv"};
  std::filesystem::create_directories(paths.videos_dir);
  std::vector<dataset::LabelRecord> labels;
  std::map<std::string, int> folds;
  for (std::size_t k = 0; k < videos.size(); ++k) {
    const auto& v = videos[k];
    const auto frames = render_moving_dots(v.options);
    media::write_raw_video(paths.videos_dir / v.label.video_id, frames);
    labels.push_back(v.label);
    folds[v.label.video_id] = static_cast<int>(k % dataset::kFoldCount);
  }
  write_labels_csv(paths.labels_csv, labels);
  write_folds_csv(paths.folds_csv, dataset::FoldAssignment(std::move(folds)));
  return paths;
}

}  // namespace spermflow::fixtures

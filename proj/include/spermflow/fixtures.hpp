#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spermflow/dataset.hpp"
#include "spermflow/media.hpp"

// Synthetic "semen sample" videos: bright dots on a dark background, some
// swimming straight, some jittering in place, the rest still. Labels follow
// the mix, so motion carries the signal the network has to learn.
namespace spermflow::fixtures {

struct MovingDotsOptions {
  int width = 64;
  int height = 64;
  int frames = 24;
  int dots = 16;
  double progressive_fraction = 0.5;
  double non_progressive_fraction = 0.25;
  double speed = 1.5;  // pixels per frame for progressive dots
  double radius = 2.0;
  std::uint64_t seed = 1;
};

std::vector<media::PixelFrame> render_moving_dots(const MovingDotsOptions& options);

struct FixtureVideo {
  dataset::LabelRecord label;
  MovingDotsOptions options;
};

// `count` videos with ids "p<k>_v<k>" and labels spread over the 0-100 range.
std::vector<FixtureVideo> make_fixture_set(int count, std::uint64_t seed, int width = 64, int height = 64,
                                           int frames = 24);

void write_labels_csv(const std::filesystem::path& path, const std::vector<dataset::LabelRecord>& labels);
void write_folds_csv(const std::filesystem::path& path, const dataset::FoldAssignment& folds);

struct FixturePaths {
  std::filesystem::path videos_dir;
  std::filesystem::path labels_csv;
  std::filesystem::path folds_csv;
};

// Writes <dir>/videos/<id>.rgb24 (+ sidecar), labels.csv and folds.csv with
// video k assigned to fold k mod 3.
FixturePaths write_fixture_set(const std::filesystem::path& dir, const std::vector<FixtureVideo>& videos);

}  // namespace spermflow::fixtures

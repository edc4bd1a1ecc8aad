// Writes a synthetic moving-dot video set (videos/, labels.csv, folds.csv).
#include <CLI11.hpp>

#include <iostream>

#include "spermflow/errors.hpp"
#include "spermflow/fixtures.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic moving-dot fixture"};
  std::string out;
  int count = 8;
  int size = 64;
  int frames = 24;
  std::uint64_t seed = 7;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--videos", count, "Number of videos");
  app.add_option("--size", size, "Frame width and height");
  app.add_option("--frames", frames, "Frames per video");
  app.add_option("--seed", seed, "Random seed");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto set = spermflow::fixtures::make_fixture_set(count, seed, size, size, frames);
    const auto paths = spermflow::fixtures::write_fixture_set(out, set);
    std::cout << "videos: " << paths.videos_dir.string() << "\nlabels: " << paths.labels_csv.string()
              << "\nfolds: " << paths.folds_csv.string() << '\n';
  } catch (const spermflow::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "spermflow/dataset.hpp"
#include "spermflow/errors.hpp"
#include "spermflow/fixtures.hpp"
#include "test_support.hpp"

using namespace spermflow;
using test_support::TempDir;

namespace {

constexpr const char* kLabelHeader =
    "video_id,progressive,non_progressive,immotile,head_defects,tail_defects,midpiece_neck_defects\n";

media::VideoSource dot_video(const TempDir& dir, const std::string& id, int frames, std::uint64_t seed = 3) {
  fixtures::MovingDotsOptions o;
  o.width = 40;
  o.height = 32;
  o.frames = frames;
  o.seed = seed;
  media::write_raw_video(dir / id, fixtures::render_moving_dots(o));
  return media::open_video(dir / (id + ".rgb24"));
}

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

dataset::SampleTensor synthetic_sample(const std::string& id, int start, std::uint64_t seed) {
  dataset::SampleTensor s;
  s.video_id = id;
  s.start_frame = start;
  s.kind = dataset::DatasetKind::D2;
  s.task = dataset::Task::Morphology;
  s.target = {12.5f, 40.0f, 3.25f};
  s.data.resize(dataset::kSampleValues);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : s.data) v = u(rng);
  return s;
}

}  // namespace

TEST_CASE("uniform chunk placement") {
  const auto chunks = dataset::sample_chunk_positions("v", 300);
  REQUIRE(chunks.size() == 250);
  CHECK(chunks.front().start_frame == 0);
  CHECK(chunks.back().start_frame == 289);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    CHECK(chunks[i].length == 11);
    CHECK(chunks[i].video_id == "v");
    // round(i * 289 / 249), halves up
    const long expect = static_cast<long>(std::floor(i * 289.0 / 249.0 + 0.5));
    CHECK(chunks[i].start_frame == expect);
  }

  const auto one = dataset::sample_chunk_positions("v", 50, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].start_frame == 0);

  const auto exact = dataset::sample_chunk_positions("v", 11, 4);
  for (const auto& c : exact) CHECK(c.start_frame == 0);

  CHECK_THROWS_AS(dataset::sample_chunk_positions("v", 10), InputError);
  CHECK_THROWS_AS(dataset::sample_chunk_positions("v", 100, 0), InputError);
}

TEST_CASE("property: chunk positions are sorted, in range and seed-deterministic") {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> frames(11, 2000), count(1, 300);
  for (int round = 0; round < 50; ++round) {
    const int f = frames(gen), n = count(gen);
    for (auto placement : {dataset::ChunkPlacement::Uniform, dataset::ChunkPlacement::Random}) {
      const auto a = dataset::sample_chunk_positions("x", f, n, 11, placement, 42);
      const auto b = dataset::sample_chunk_positions("x", f, n, 11, placement, 42);
      CHECK(a == b);
      REQUIRE(static_cast<int>(a.size()) == n);
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].start_frame >= 0);
        CHECK(a[i].start_frame + 11 <= f);
        if (i > 0) CHECK(a[i - 1].start_frame <= a[i].start_frame);
      }
      if (placement == dataset::ChunkPlacement::Uniform && n > 1) {
        CHECK(a.back().start_frame == f - 11);
      }
    }
  }
}

TEST_CASE("labels CSV parsing and validation") {
  TempDir dir("labels");
  write_text(dir / "ok.csv", std::string(kLabelHeader) + "p1_a,50,30,20,10,20,30\np2_b,10,10,80.5,0,0,100\n");
  const auto labels = dataset::load_labels(dir / "ok.csv");
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].video_id == "p1_a");
  CHECK(labels[1].motility[2] == 80.5);
  CHECK(labels[0].target(dataset::Task::Morphology)[1] == 20.0);

  write_text(dir / "header.csv", "id,a,b,c,d,e,f\nx,1,1,98,0,0,0\n");
  CHECK_THROWS_AS(dataset::load_labels(dir / "header.csv"), InputError);
  write_text(dir / "range.csv", std::string(kLabelHeader) + "x,50,30,20,10,120,30\n");
  CHECK_THROWS_AS(dataset::load_labels(dir / "range.csv"), InputError);
  write_text(dir / "sum.csv", std::string(kLabelHeader) + "x,50,30,25,10,20,30\n");
  CHECK_THROWS_AS(dataset::load_labels(dir / "sum.csv"), InputError);
  write_text(dir / "dup.csv", std::string(kLabelHeader) + "x,50,30,20,1,2,3\nx,50,30,20,1,2,3\n");
  CHECK_THROWS_AS(dataset::load_labels(dir / "dup.csv"), InputError);
  write_text(dir / "text.csv", std::string(kLabelHeader) + "x,50,3O,20,1,2,3\n");
  CHECK_THROWS_AS(dataset::load_labels(dir / "text.csv"), InputError);
  try {
    dataset::load_labels(dir / "absent.csv");
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("absent.csv") != std::string::npos);
  }
}

TEST_CASE("fold assignment") {
  std::vector<dataset::LabelRecord> labels;
  for (const char* id : {"p1_a", "p1_b", "p2_a", "p3_a", "p3_b", "p4_a", "p5_x", "p6_y"}) labels.push_back({id, {}, {}});

  SUBCASE("fallback hashes the participant so one person never spans folds") {
    const auto folds = dataset::assign_folds(labels);
    CHECK(folds.fold_of("p1_a") == folds.fold_of("p1_b"));
    CHECK(folds.fold_of("p3_a") == folds.fold_of("p3_b"));
    for (const auto& l : labels) {
      const auto expect = static_cast<int>(dataset::stable_hash(dataset::participant_of(l.video_id)) % 3);
      CHECK(folds.fold_of(l.video_id) == expect);
    }
    CHECK(dataset::participant_of("p12_video3") == "p12");
    CHECK(dataset::participant_of("plain") == "plain");
  }
  SUBCASE("FNV-1a reference values") {
    CHECK(dataset::stable_hash("") == 14695981039346656037ULL);
    CHECK(dataset::stable_hash("a") == 0xaf63dc4c8601ec8cULL);
  }
  SUBCASE("fold file is taken verbatim") {
    TempDir dir("folds");
    std::string text = "video_id,fold\n";
    for (std::size_t i = 0; i < labels.size(); ++i) text += labels[i].video_id + "," + std::to_string(i % 3) + "\n";
    write_text(dir / "folds.csv", text);
    const auto folds = dataset::assign_folds(labels, dir / "folds.csv");
    for (std::size_t i = 0; i < labels.size(); ++i) CHECK(folds.fold_of(labels[i].video_id) == int(i % 3));
    CHECK(folds.videos_in(0) == std::vector<std::string>{"p1_a", "p3_a", "p5_x"});

    write_text(dir / "short.csv", "video_id,fold\np1_a,0\n");
    CHECK_THROWS_AS(dataset::assign_folds(labels, dir / "short.csv"), InputError);
    write_text(dir / "bad.csv", text + "extra,3\n");
    CHECK_THROWS_AS(dataset::assign_folds(labels, dir / "bad.csv"), InputError);
  }
  CHECK_THROWS_AS(dataset::FoldAssignment({{"a", 0}}).fold_of("b"), InputError);
}

TEST_CASE("D1 samples stack nine resized grey frames") {
  TempDir dir("d1");
  const auto video = dot_video(dir, "p1_v", 20);
  const auto s = dataset::build_d1_sample(video, {"p1_v", 4, 11});
  s.validate();
  CHECK(s.kind == dataset::DatasetKind::D1);
  for (int c = 0; c < 9; ++c) {
    const auto expect = media::resize_bilinear(media::to_grayscale(video.read_frame(4 + c)), 256, 256);
    const auto got = s.channel(c);
    CHECK(std::equal(got.begin(), got.end(), expect.data.begin()));
  }
  CHECK_THROWS_AS(dataset::build_d1_sample(video, {"p1_v", 12, 11}), InputError);
}

TEST_CASE("D2 channel ordering: RGB, stride-1 flow, stride-10 flow") {
  TempDir dir("d2");
  const auto video = dot_video(dir, "p1_v", 16);
  const int start = 3;
  const auto s = dataset::build_d2_sample(video, {"p1_v", start, 11}, {});
  s.validate();

  // Independent composition from the public primitives.
  const auto rgb = media::resize_bilinear(video.read_frame(start), 256, 256);
  const auto gray = [&](int i) { return media::resize_bilinear(media::to_grayscale(video.read_frame(i)), 256, 256); };
  const auto f1 = flow::flow_to_rgb(flow::estimate_flow(gray(start), gray(start + 1), {}));
  const auto f10 = flow::flow_to_rgb(flow::estimate_flow(gray(start), gray(start + 10), {}));
  const media::PixelFrame* sources[3] = {&rgb, &f1, &f10};
  for (int c = 0; c < 9; ++c) {
    const auto& img = *sources[c / 3];
    const auto got = s.channel(c);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i] != img.data[3 * i + c % 3] / 255.0f;
    CHECK_MESSAGE(mismatches == 0, "channel " << c);
  }
  // The two flow images genuinely differ, so a swap would be caught.
  CHECK(f1.data != f10.data);
  CHECK_THROWS_AS(dataset::build_d2_sample(video, {"p1_v", 6, 11}, {}), InputError);
}

TEST_CASE("dataset files round trip bit-exactly") {
  TempDir dir("sprm");
  std::vector<dataset::SampleTensor> samples{synthetic_sample("p1_a", 0, 1), synthetic_sample("p1_a", 7, 2),
                                             synthetic_sample("p2_b", 3, 3)};
  flow::FarnebackParams params;
  params.winsize = 9;
  const auto manifest = dataset::write_dataset(dir / "d.sprm", samples, dataset::DatasetKind::D2, params);
  CHECK(manifest.sample_count == 3);
  CHECK(manifest.chunks_per_video.at("p1_a") == 2);

  const auto back = dataset::read_dataset(dir / "d.sprm");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].video_id == samples[i].video_id);
    CHECK(back[i].start_frame == samples[i].start_frame);
    CHECK(back[i].task == samples[i].task);
    CHECK(back[i].target == samples[i].target);
    CHECK(std::memcmp(back[i].data.data(), samples[i].data.data(), samples[i].data.size() * sizeof(float)) == 0);
  }
  const dataset::DatasetFile file(dir / "d.sprm");
  CHECK(file.kind() == dataset::DatasetKind::D2);
  CHECK(file.manifest().flow_params == params);
  CHECK(file.meta(2).video_id == "p2_b");
  CHECK(file.load(1).data == samples[1].data);

  const auto bytes = test_support::read_bytes(dir / "d.sprm");
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SPRM");

  SUBCASE("truncation and trailing bytes are rejected") {
    std::ofstream(dir / "cut.sprm", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    CHECK_THROWS_AS(dataset::DatasetFile(dir / "cut.sprm"), InputError);
    auto extra = bytes;
    extra.push_back('x');
    std::ofstream(dir / "extra.sprm", std::ios::binary).write(extra.data(), static_cast<std::streamsize>(extra.size()));
    CHECK_THROWS_AS(dataset::DatasetFile(dir / "extra.sprm"), InputError);
    auto magic = bytes;
    magic[0] = 'X';
    std::ofstream(dir / "magic.sprm", std::ios::binary).write(magic.data(), static_cast<std::streamsize>(magic.size()));
    CHECK_THROWS_AS(dataset::DatasetFile(dir / "magic.sprm"), InputError);
  }
  SUBCASE("unfinished writers leave no file behind") {
    {
      dataset::DatasetWriter w(dir / "partial.sprm", dataset::DatasetKind::D2, {});
      w.write(samples[0]);
    }
    CHECK_FALSE(std::filesystem::exists(dir / "partial.sprm"));
  }
  SUBCASE("kind mismatch") {
    CHECK_THROWS_AS(dataset::write_dataset(dir / "k.sprm", samples, dataset::DatasetKind::D1), InputError);
  }
}

TEST_CASE("build_dataset writes 250 chunks per video in sorted order, independent of threads") {
  TempDir dir("build");
  std::vector<media::VideoSource> videos{dot_video(dir, "p2_b", 14, 8), dot_video(dir, "p1_a", 30, 9),
                                         dot_video(dir, "p9_unlabelled", 12, 10)};
  std::vector<dataset::LabelRecord> labels{{"p1_a", {50, 30, 20}, {1, 2, 3}}, {"p2_b", {10, 10, 80}, {4, 5, 6}}};
  dataset::BuildOptions opts;
  opts.kind = dataset::DatasetKind::D1;
  opts.threads = 1;
  const auto m1 = dataset::build_dataset(videos, labels, opts, dir / "t1.sprm");
  opts.threads = 3;
  const auto m3 = dataset::build_dataset(videos, labels, opts, dir / "t3.sprm");
  CHECK(m1.sample_count == 500);
  CHECK(m1.chunks_per_video.at("p1_a") == 250);
  CHECK(m1.chunks_per_video.at("p2_b") == 250);
  CHECK(m1.chunks_per_video.count("p9_unlabelled") == 0);
  CHECK(m3.sample_count == 500);
  CHECK(test_support::file_hash(dir / "t1.sprm") == test_support::file_hash(dir / "t3.sprm"));

  const dataset::DatasetFile file(dir / "t1.sprm");
  const auto expect = dataset::sample_chunk_positions("p1_a", 30);
  for (std::size_t i = 0; i < 250; ++i) {
    CHECK(file.meta(i).video_id == "p1_a");
    CHECK(file.meta(i).start_frame == expect[i].start_frame);
    CHECK(file.meta(i).target == std::array<float, 3>{50, 30, 20});
  }
  CHECK(file.meta(250).video_id == "p2_b");

  labels.push_back({"p7_missing", {50, 30, 20}, {1, 2, 3}});
  CHECK_THROWS_AS(dataset::build_dataset(videos, labels, opts, dir / "bad.sprm"), InputError);
}

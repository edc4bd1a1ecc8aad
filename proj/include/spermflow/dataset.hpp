#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spermflow/flow.hpp"
#include "spermflow/media.hpp"

namespace spermflow::dataset {

inline constexpr int kSampleChannels = 9;
inline constexpr int kSampleSize = 256;
inline constexpr std::size_t kSampleValues = static_cast<std::size_t>(kSampleChannels) * kSampleSize * kSampleSize;
inline constexpr int kChunkLength = 11;
inline constexpr int kChunksPerVideo = 250;
inline constexpr int kFoldCount = 3;

enum class DatasetKind : std::uint8_t { D1 = 1, D2 = 2 };
enum class Task : std::uint8_t { Motility = 0, Morphology = 1 };

std::string to_string(DatasetKind kind);
std::string to_string(Task task);
DatasetKind parse_dataset_kind(std::string_view text);
Task parse_task(std::string_view text);

struct LabelRecord {
  std::string video_id;
  std::array<double, 3> motility{};    // progressive, non-progressive, immotile
  std::array<double, 3> morphology{};  // head, tail, midpiece and neck defects

  const std::array<double, 3>& target(Task task) const { return task == Task::Motility ? motility : morphology; }
};

// Reads the labels CSV; rows are validated (percentages in [0, 100],
// motility summing to 100 +- 1).
std::vector<LabelRecord> load_labels(const std::filesystem::path& path);

struct ChunkSpec {
  std::string video_id;
  int start_frame = 0;
  int length = kChunkLength;
  friend bool operator==(const ChunkSpec&, const ChunkSpec&) = default;
};

enum class ChunkPlacement { Uniform, Random };

// Start positions sorted ascending. Uniform placement spaces starts evenly
// over [0, frame_count - chunk_len]; random placement draws them from `seed`.
std::vector<ChunkSpec> sample_chunk_positions(std::string_view video_id, int frame_count,
                                              int n_chunks = kChunksPerVideo, int chunk_len = kChunkLength,
                                              ChunkPlacement placement = ChunkPlacement::Uniform,
                                              std::uint64_t seed = 0);

struct SampleTensor {
  std::string video_id;
  int start_frame = 0;
  Task task = Task::Motility;
  DatasetKind kind = DatasetKind::D1;
  std::array<float, 3> target{};
  std::vector<float> data;  // [channel][row][col], kSampleValues entries

  std::span<const float> channel(int c) const {
    return std::span<const float>(data).subspan(static_cast<std::size_t>(c) * kSampleSize * kSampleSize,
                                                static_cast<std::size_t>(kSampleSize) * kSampleSize);
  }
  void validate() const;
};

SampleTensor build_d1_sample(const media::VideoSource& src, const ChunkSpec& chunk);
SampleTensor build_d2_sample(const media::VideoSource& src, const ChunkSpec& chunk,
                             const flow::FarnebackParams& params);

// FNV-1a; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view text);

// Participant id: the video id up to its first '_'.
std::string participant_of(std::string_view video_id);

class FoldAssignment {
 public:
  FoldAssignment() = default;
  explicit FoldAssignment(std::map<std::string, int> folds);

  int fold_of(const std::string& video_id) const;
  bool contains(const std::string& video_id) const { return folds_.count(video_id) != 0; }
  std::vector<std::string> videos_in(int fold) const;
  const std::map<std::string, int>& map() const { return folds_; }

 private:
  std::map<std::string, int> folds_;
};

// With a fold file the mapping is taken verbatim; otherwise participants are
// hashed (FNV-1a) modulo three.
FoldAssignment assign_folds(const std::vector<LabelRecord>& labels,
                            const std::optional<std::filesystem::path>& fold_file = std::nullopt);

struct DatasetManifest {
  DatasetKind kind = DatasetKind::D1;
  flow::FarnebackParams flow_params;
  std::uint32_t sample_count = 0;
  std::map<std::string, std::uint32_t> chunks_per_video;
};

// Lightweight per-sample record used for batching without touching pixels.
struct SampleMeta {
  std::string video_id;
  int start_frame = 0;
  Task task = Task::Motility;
  std::array<float, 3> target{};
};

class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual DatasetKind kind() const = 0;
  virtual std::size_t size() const = 0;
  virtual const SampleMeta& meta(std::size_t index) const = 0;
  virtual SampleTensor load(std::size_t index) const = 0;
};

class InMemoryDataset : public SampleSource {
 public:
  InMemoryDataset(DatasetKind kind, std::vector<SampleTensor> samples);

  DatasetKind kind() const override { return kind_; }
  std::size_t size() const override { return samples_.size(); }
  const SampleMeta& meta(std::size_t index) const override { return metas_.at(index); }
  SampleTensor load(std::size_t index) const override { return samples_.at(index); }
  const std::vector<SampleTensor>& samples() const { return samples_; }

 private:
  DatasetKind kind_;
  std::vector<SampleTensor> samples_;
  std::vector<SampleMeta> metas_;
};

// Streams samples into the SPRM container; the header count is patched on
// finish(). Not thread-safe: exactly one writer per file.
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& path, DatasetKind kind, const flow::FarnebackParams& params);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void write(const SampleTensor& sample);
  DatasetManifest finish();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  DatasetManifest manifest_;
  bool finished_ = false;
};

DatasetManifest write_dataset(const std::filesystem::path& path, std::span<const SampleTensor> samples,
                              DatasetKind kind, const flow::FarnebackParams& params = {});

// Random-access reader; indexes sample headers on open and loads tensors on demand.
class DatasetFile : public SampleSource {
 public:
  explicit DatasetFile(const std::filesystem::path& path);

  DatasetKind kind() const override { return manifest_.kind; }
  std::size_t size() const override { return metas_.size(); }
  const SampleMeta& meta(std::size_t index) const override { return metas_.at(index); }
  SampleTensor load(std::size_t index) const override;
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  std::filesystem::path path_;
  DatasetManifest manifest_;
  std::vector<SampleMeta> metas_;
  std::vector<std::uint64_t> tensor_offsets_;
};

std::vector<SampleTensor> read_dataset(const std::filesystem::path& path);

void write_manifest_json(const std::filesystem::path& path, const DatasetManifest& manifest);

struct BuildOptions {
  DatasetKind kind = DatasetKind::D2;
  Task task = Task::Motility;
  int n_chunks = kChunksPerVideo;
  ChunkPlacement placement = ChunkPlacement::Uniform;
  std::uint64_t seed = 0;
  flow::FarnebackParams flow_params;
  unsigned threads = 1;
};

// Builds every chunk of every labelled video in (video_id, start_frame)
// order and streams it to `out`. Workers compute samples; the caller's
// thread is the single writer.
DatasetManifest build_dataset(std::span<const media::VideoSource> videos, const std::vector<LabelRecord>& labels,
                              const BuildOptions& options, const std::filesystem::path& out);

}  // namespace spermflow::dataset

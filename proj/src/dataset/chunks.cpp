#include <algorithm>
#include <cmath>
#include <random>

#include "spermflow/dataset.hpp"
#include "spermflow/errors.hpp"

namespace spermflow::dataset {
namespace {

constexpr std::size_t kPlane = static_cast<std::size_t>(kSampleSize) * kSampleSize;

void check_chunk(const media::VideoSource& src, const ChunkSpec& chunk, int min_length) {
  if (chunk.length < min_length) {
    throw InputError("chunk of length " + std::to_string(chunk.length) + " is shorter than the required " +
                     std::to_string(min_length) + " frames");
  }
  if (chunk.start_frame < 0 || chunk.start_frame + chunk.length > src.frame_count()) {
    throw InputError("chunk [" + std::to_string(chunk.start_frame) + ", +" + std::to_string(chunk.length) +
                     ") does not fit video " + src.id() + " with " + std::to_string(src.frame_count()) + " frames");
  }
}

media::GrayFrame network_gray(const media::VideoSource& src, int index) {
  return media::resize_bilinear(media::to_grayscale(src.read_frame(index)), kSampleSize, kSampleSize);
}

// Writes an RGB image as three unit-range planes starting at `first_channel`.
void put_rgb_planes(const media::PixelFrame& image, std::vector<float>& data, int first_channel) {
  for (std::size_t i = 0; i < kPlane; ++i) {
    for (int c = 0; c < 3; ++c) {
      data[(first_channel + c) * kPlane + i] = image.data[3 * i + c] / 255.0f;
    }
  }
}

SampleTensor empty_sample(const ChunkSpec& chunk, DatasetKind kind) {
  SampleTensor sample;
  sample.video_id = chunk.video_id;
  sample.start_frame = chunk.start_frame;
  sample.kind = kind;
  sample.data.assign(kSampleValues, 0.0f);
  return sample;
}

}  // namespace

std::vector<ChunkSpec> sample_chunk_positions(std::string_view video_id, int frame_count, int n_chunks, int chunk_len,
                                              ChunkPlacement placement, std::uint64_t seed) {
  if (n_chunks < 1) throw InputError("n_chunks must be >= 1");
  if (chunk_len < 1) throw InputError("chunk_len must be >= 1");
  if (frame_count < chunk_len) {
    throw InputError("video " + std::string(video_id) + " has " + std::to_string(frame_count) +
                     " frames, fewer than the chunk length " + std::to_string(chunk_len));
  }
  const long span = frame_count - chunk_len;
  std::vector<int> starts(static_cast<std::size_t>(n_chunks), 0);
  if (placement == ChunkPlacement::Uniform) {
    if (n_chunks > 1) {
      const long denom = n_chunks - 1;
      for (long i = 0; i < n_chunks; ++i) {
        // round(i * span / denom), halves rounded up, in exact integer arithmetic
        starts[i] = static_cast<int>((2 * i * span + denom) / (2 * denom));
      }
    }
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<long> pick(0, span);
    for (int& s : starts) s = static_cast<int>(pick(rng));
    std::sort(starts.begin(), starts.end());
  }
  std::vector<ChunkSpec> chunks;
  chunks.reserve(starts.size());
  for (int s : starts) chunks.push_back({std::string(video_id), s, chunk_len});
  return chunks;
}

void SampleTensor::validate() const {
  if (data.size() != kSampleValues) throw InputError("sample tensor must hold 9x256x256 values");
  for (float v : data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw InputError("sample value outside [0, 1] in " + video_id);
  }
  for (float t : target) {
    if (!(t >= 0.0f && t <= 100.0f)) throw InputError("target outside [0, 100] in " + video_id);
  }
}

SampleTensor build_d1_sample(const media::VideoSource& src, const ChunkSpec& chunk) {
  check_chunk(src, chunk, kSampleChannels);
  SampleTensor sample = empty_sample(chunk, DatasetKind::D1);
  for (int c = 0; c < kSampleChannels; ++c) {
    const media::GrayFrame gray = network_gray(src, chunk.start_frame + c);
    std::copy(gray.data.begin(), gray.data.end(), sample.data.begin() + static_cast<std::ptrdiff_t>(c * kPlane));
  }
  return sample;
}

SampleTensor build_d2_sample(const media::VideoSource& src, const ChunkSpec& chunk,
                             const flow::FarnebackParams& params) {
  check_chunk(src, chunk, kChunkLength);
  SampleTensor sample = empty_sample(chunk, DatasetKind::D2);
  const media::PixelFrame first = src.read_frame(chunk.start_frame);
  put_rgb_planes(media::resize_bilinear(first, kSampleSize, kSampleSize), sample.data, 0);

  const media::GrayFrame base =
      media::resize_bilinear(media::to_grayscale(first), kSampleSize, kSampleSize);
  const media::GrayFrame stride1 = network_gray(src, chunk.start_frame + 1);
  const media::GrayFrame stride10 = network_gray(src, chunk.start_frame + 10);
  put_rgb_planes(flow::flow_to_rgb(flow::estimate_flow(base, stride1, params)), sample.data, 3);
  put_rgb_planes(flow::flow_to_rgb(flow::estimate_flow(base, stride10, params)), sample.data, 6);
  return sample;
}

}  // namespace spermflow::dataset

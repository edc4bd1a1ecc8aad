#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace spermflow::media {

struct FrameSize {
  int width = 0;
  int height = 0;
  friend auto operator<=>(const FrameSize&, const FrameSize&) = default;
};

// Row-major interleaved RGB, 8 bits per channel.
struct PixelFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  PixelFrame() = default;
  PixelFrame(int w, int h);
  PixelFrame(int w, int h, std::vector<std::uint8_t> bytes);

  std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  FrameSize size() const { return {width, height}; }
  void validate() const;
  friend bool operator==(const PixelFrame&, const PixelFrame&) = default;
};

// Row-major single-channel luma in [0, 1].
struct GrayFrame {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayFrame() = default;
  GrayFrame(int w, int h, float fill = 0.0f);
  GrayFrame(int w, int h, std::vector<float> values);

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  FrameSize size() const { return {width, height}; }
  void validate() const;
  friend bool operator==(const GrayFrame&, const GrayFrame&) = default;
};

// An ordered, immutable sequence of equally sized frames. Reads are
// stateless and may be issued concurrently.
class VideoSource {
 public:
  const std::string& id() const { return id_; }
  int frame_count() const { return frame_count_; }
  FrameSize frame_size() const { return size_; }
  bool is_raw_stream() const { return std::holds_alternative<RawStream>(backing_); }

  PixelFrame read_frame(int index) const;

 private:
  friend VideoSource open_video(const std::filesystem::path& path);

  struct ImageSequence {
    std::vector<std::filesystem::path> files;
  };
  struct RawStream {
    std::filesystem::path payload;
  };

  std::string id_;
  int frame_count_ = 0;
  FrameSize size_;
  std::variant<ImageSequence, RawStream> backing_;
};

// Accepts a directory of `%06d.ppm|pgm` frames or a `<name>.rgb24` stream
// with its `<name>.meta.json` sidecar.
VideoSource open_video(const std::filesystem::path& path);

// Writes `<stem>.rgb24` and `<stem>.meta.json`.
void write_raw_video(const std::filesystem::path& stem, std::span<const PixelFrame> frames);

// BT.601 luma scaled to [0, 1].
GrayFrame to_grayscale(const PixelFrame& frame);

// Bilinear resampling with half-pixel centres and edge clamping.
GrayFrame resize_bilinear(const GrayFrame& frame, int out_w, int out_h);
PixelFrame resize_bilinear(const PixelFrame& frame, int out_w, int out_h);

// Kernel behind both overloads; `src` holds `channels` interleaved values per pixel.
std::vector<float> resize_plane(std::span<const float> src, int width, int height, int channels,
                                int out_w, int out_h);

}  // namespace spermflow::media

#include "spermflow/media.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>

#include <json.hpp>

#include "spermflow/errors.hpp"
#include "spermflow/image_io.hpp"

namespace spermflow::media {

namespace fs = std::filesystem;

PixelFrame::PixelFrame(int w, int h) : width(w), height(h) {
  if (w < 1 || h < 1) throw InputError("frame dimensions must be positive");
  data.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

PixelFrame::PixelFrame(int w, int h, std::vector<std::uint8_t> bytes) : width(w), height(h), data(std::move(bytes)) {
  validate();
}

void PixelFrame::validate() const {
  if (width < 1 || height < 1) throw InputError("frame dimensions must be positive");
  if (data.size() != static_cast<std::size_t>(width) * height * 3) {
    throw InputError("pixel buffer length does not match " + std::to_string(width) + "x" + std::to_string(height) + "x3");
  }
}

GrayFrame::GrayFrame(int w, int h, float fill) : width(w), height(h) {
  if (w < 1 || h < 1) throw InputError("frame dimensions must be positive");
  data.assign(static_cast<std::size_t>(w) * h, fill);
}

GrayFrame::GrayFrame(int w, int h, std::vector<float> values) : width(w), height(h), data(std::move(values)) {
  validate();
}

void GrayFrame::validate() const {
  if (width < 1 || height < 1) throw InputError("frame dimensions must be positive");
  if (data.size() != static_cast<std::size_t>(width) * height) {
    throw InputError("luma buffer length does not match frame dimensions");
  }
  for (float v : data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw InputError("luma value outside [0, 1]");
  }
}

PixelFrame VideoSource::read_frame(int index) const {
  if (index < 0 || index >= frame_count_) {
    throw std::out_of_range("frame index " + std::to_string(index) + " outside [0, " +
                            std::to_string(frame_count_) + ") for video " + id_);
  }
  if (const auto* seq = std::get_if<ImageSequence>(&backing_)) {
    PixelFrame frame = read_netpbm(seq->files[static_cast<std::size_t>(index)]);
    if (frame.size() != size_) throw InputError("frame size changed in " + seq->files[index].string());
    return frame;
  }
  const auto& raw = std::get<RawStream>(backing_);
  std::ifstream in(raw.payload, std::ios::binary);
  if (!in) throw InputError("cannot open " + raw.payload.string());
  const std::size_t frame_bytes = static_cast<std::size_t>(size_.width) * size_.height * 3;
  in.seekg(static_cast<std::streamoff>(frame_bytes * static_cast<std::size_t>(index)));
  PixelFrame frame(size_.width, size_.height);
  in.read(reinterpret_cast<char*>(frame.data.data()), static_cast<std::streamsize>(frame_bytes));
  if (static_cast<std::size_t>(in.gcount()) != frame_bytes) throw InputError("truncated stream " + raw.payload.string());
  return frame;
}

namespace {

fs::path sidecar_for(const fs::path& payload) {
  fs::path meta = payload;
  meta.replace_extension(".meta.json");
  return meta;
}


}  // namespace

VideoSource open_video(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("no such video: " + path.string());
  VideoSource src;

  if (fs::is_directory(path)) {
    static const std::regex frame_name(R"(^\d{6}\.(ppm|pgm)$)");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), frame_name)) {
        files.push_back(entry.path());
      }
    }
    if (files.empty()) throw InputError("no frames in " + path.string());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    const FrameSize size = read_netpbm_size(files.front());
    for (const auto& file : files) {
      if (read_netpbm_size(file) != size) throw InputError("inconsistent frame dimensions at " + file.string());
    }
    src.id_ = path.filename().string();
    if (src.id_.empty()) src.id_ = path.parent_path().filename().string();
    src.frame_count_ = static_cast<int>(files.size());
    src.size_ = size;
    src.backing_ = VideoSource::ImageSequence{std::move(files)};
    return src;
  }

  const fs::path meta_path = sidecar_for(path);
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw InputError("missing sidecar header " + meta_path.string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed sidecar " + meta_path.string() + ": " + e.what());
  }
  if (!meta.is_object() || !meta.contains("width") || !meta.contains("height") || !meta.contains("frames")) {
    throw InputError("sidecar " + meta_path.string() + " needs width, height and frames");
  }
  const int width = meta.at("width").get<int>();
  const int height = meta.at("height").get<int>();
  const long declared = meta.at("frames").get<long>();
  if (width < 1 || height < 1) throw InputError("invalid frame size in " + meta_path.string());

  const auto bytes = fs::file_size(path);
  const auto frame_bytes = static_cast<std::uintmax_t>(width) * height * 3;
  if (bytes % frame_bytes != 0) throw InputError("stream length is not a whole number of frames: " + path.string());
  const auto count = static_cast<long>(bytes / frame_bytes);
  if (count == 0) throw InputError("no frames in " + path.string());
  if (count != declared) {
    throw InputError("sidecar declares " + std::to_string(declared) + " frames but stream holds " +
                     std::to_string(count) + ": " + path.string());
  }
  src.id_ = path.stem().string();
  src.frame_count_ = static_cast<int>(count);
  src.size_ = {width, height};
  src.backing_ = VideoSource::RawStream{path};
  return src;
}

void write_raw_video(const fs::path& stem, std::span<const PixelFrame> frames) {
  if (frames.empty()) throw InputError("cannot write an empty video");
  const FrameSize size = frames.front().size();
  fs::path payload = stem;
  payload += ".rgb24";
  std::ofstream out(payload, std::ios::binary);
  if (!out) throw InputError("cannot write " + payload.string());
  for (const auto& frame : frames) {
    frame.validate();
    if (frame.size() != size) throw InputError("all frames of a video must share one size");
    out.write(reinterpret_cast<const char*>(frame.data.data()), static_cast<std::streamsize>(frame.data.size()));
  }
  nlohmann::json meta = {{"width", size.width}, {"height", size.height}, {"frames", frames.size()}};
  std::ofstream meta_out(sidecar_for(payload));
  meta_out << meta.dump() << '\n';
}

GrayFrame to_grayscale(const PixelFrame& frame) {
  frame.validate();
  GrayFrame gray(frame.width, frame.height);
  const std::size_t pixels = gray.data.size();
  for (std::size_t i = 0; i < pixels; ++i) {
    const double luma = 0.299 * frame.data[3 * i] + 0.587 * frame.data[3 * i + 1] + 0.114 * frame.data[3 * i + 2];
    gray.data[i] = static_cast<float>(std::clamp(luma / 255.0, 0.0, 1.0));
  }
  return gray;
}

std::vector<float> resize_plane(std::span<const float> src, int width, int height, int channels, int out_w,
                                int out_h) {
  if (out_w < 1 || out_h < 1) throw InputError("resize target must be at least 1x1");
  if (width < 1 || height < 1 || src.size() != static_cast<std::size_t>(width) * height * channels) {
    throw InputError("resize source has inconsistent dimensions");
  }

  struct Tap {
    int lo, hi;
    float frac;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> result(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      const double s = std::clamp((i + 0.5) * ratio - 0.5, 0.0, static_cast<double>(in - 1));
      const int lo = static_cast<int>(std::floor(s));
      result[i] = {lo, std::min(lo + 1, in - 1), static_cast<float>(s - lo)};
    }
    return result;
  };
  const auto xs = taps(width, out_w);
  const auto ys = taps(height, out_h);

  std::vector<float> dst(static_cast<std::size_t>(out_w) * out_h * channels);
  for (int y = 0; y < out_h; ++y) {
    const Tap ty = ys[y];
    const float* row0 = src.data() + static_cast<std::size_t>(ty.lo) * width * channels;
    const float* row1 = src.data() + static_cast<std::size_t>(ty.hi) * width * channels;
    float* out = dst.data() + static_cast<std::size_t>(y) * out_w * channels;
    for (int x = 0; x < out_w; ++x) {
      const Tap tx = xs[x];
      for (int c = 0; c < channels; ++c) {
        const float a = row0[tx.lo * channels + c] + tx.frac * (row0[tx.hi * channels + c] - row0[tx.lo * channels + c]);
        const float b = row1[tx.lo * channels + c] + tx.frac * (row1[tx.hi * channels + c] - row1[tx.lo * channels + c]);
        out[x * channels + c] = a + ty.frac * (b - a);
      }
    }
  }
  return dst;
}

GrayFrame resize_bilinear(const GrayFrame& frame, int out_w, int out_h) {
  std::vector<float> values = resize_plane(frame.data, frame.width, frame.height, 1, out_w, out_h);
  for (float& v : values) v = std::clamp(v, 0.0f, 1.0f);
  GrayFrame result;
  result.width = out_w;
  result.height = out_h;
  result.data = std::move(values);
  return result;
}

PixelFrame resize_bilinear(const PixelFrame& frame, int out_w, int out_h) {
  frame.validate();
  const std::vector<float> src(frame.data.begin(), frame.data.end());
  const std::vector<float> values = resize_plane(src, frame.width, frame.height, 3, out_w, out_h);
  PixelFrame result(out_w, out_h);
  for (std::size_t i = 0; i < values.size(); ++i) {
    result.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(values[i]), 0L, 255L));
  }
  return result;
}

}  // namespace spermflow::media

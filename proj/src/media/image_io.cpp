#include "spermflow/image_io.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "spermflow/errors.hpp"

namespace spermflow::media {
namespace {

struct NetpbmHeader {
  char kind = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
};

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF || !std::isdigit(ch)) throw InputError("malformed netpbm header in " + path.string());
  long value = 0;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    if (value > (1L << 24)) throw InputError("netpbm dimension too large in " + path.string());
    ch = in.get();
  }
  // exactly one whitespace byte terminates the field; it has been consumed
  return static_cast<int>(value);
}

NetpbmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[2] = {};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw InputError("not a binary PGM/PPM file: " + path.string());
  }
  NetpbmHeader header;
  header.kind = magic[1];
  header.width = read_header_int(in, path);
  header.height = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (maxval != 255) throw InputError("only maxval 255 is supported: " + path.string());
  if (header.width < 1 || header.height < 1) throw InputError("empty image: " + path.string());
  return header;
}

}  // namespace

FrameSize read_netpbm_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  const NetpbmHeader header = read_header(in, path);
  return {header.width, header.height};
}

PixelFrame read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  const NetpbmHeader header = read_header(in, path);
  const std::size_t pixels = static_cast<std::size_t>(header.width) * header.height;
  PixelFrame frame(header.width, header.height);
  if (header.kind == '6') {
    in.read(reinterpret_cast<char*>(frame.data.data()), static_cast<std::streamsize>(pixels * 3));
    if (static_cast<std::size_t>(in.gcount()) != pixels * 3) throw InputError("truncated image " + path.string());
  } else {
    std::vector<std::uint8_t> grey(pixels);
    in.read(reinterpret_cast<char*>(grey.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(in.gcount()) != pixels) throw InputError("truncated image " + path.string());
    for (std::size_t i = 0; i < pixels; ++i) {
      frame.data[3 * i] = frame.data[3 * i + 1] = frame.data[3 * i + 2] = grey[i];
    }
  }
  return frame;
}

void write_ppm(const std::filesystem::path& path, const PixelFrame& frame) {
  frame.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.data.data()), static_cast<std::streamsize>(frame.data.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace spermflow::media

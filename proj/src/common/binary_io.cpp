#include "spermflow/binary_io.hpp"

#include <array>
#include <bit>
#include <istream>
#include <ostream>
#include <vector>

#include "spermflow/errors.hpp"

namespace spermflow::io {
namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw InputError("truncated binary stream");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(bytes[i]) << (8 * i);
  }
  return value;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t value) { put_le(out, value); }
void write_u16(std::ostream& out, std::uint16_t value) { put_le(out, value); }
void write_u32(std::ostream& out, std::uint32_t value) { put_le(out, value); }
void write_i32(std::ostream& out, std::int32_t value) {
  put_le(out, std::bit_cast<std::uint32_t>(value));
}
void write_f32(std::ostream& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }
void write_f64(std::ostream& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }

void write_f32_array(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) write_f32(out, v);
  }
}

void write_string(std::ostream& out, const std::string& value) {
  write_u32(out, static_cast<std::uint32_t>(value.size()));
  out.write(value.data(), static_cast<std::streamsize>(value.size()));
}

std::uint8_t read_u8(std::istream& in) { return get_le<std::uint8_t>(in); }
std::uint16_t read_u16(std::istream& in) { return get_le<std::uint16_t>(in); }
std::uint32_t read_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::int32_t read_i32(std::istream& in) { return std::bit_cast<std::int32_t>(get_le<std::uint32_t>(in)); }
float read_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

void read_f32_array(std::istream& in, std::span<float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    if (in.gcount() != static_cast<std::streamsize>(values.size_bytes())) {
      throw InputError("truncated binary stream");
    }
  } else {
    for (float& v : values) v = read_f32(in);
  }
}

std::string read_string(std::istream& in, std::uint32_t max_length) {
  const std::uint32_t length = read_u32(in);
  if (length > max_length) throw InputError("string length " + std::to_string(length) + " exceeds limit");
  std::string value(length, '\0');
  in.read(value.data(), length);
  if (in.gcount() != static_cast<std::streamsize>(length)) throw InputError("truncated binary stream");
  return value;
}

}  // namespace spermflow::io

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>

// Little-endian primitives shared by the dataset, weight and flow file formats.
namespace spermflow::io {

void write_u8(std::ostream& out, std::uint8_t value);
void write_u16(std::ostream& out, std::uint16_t value);
void write_u32(std::ostream& out, std::uint32_t value);
void write_i32(std::ostream& out, std::int32_t value);
void write_f32(std::ostream& out, float value);
void write_f64(std::ostream& out, double value);
void write_f32_array(std::ostream& out, std::span<const float> values);
// u32 byte length followed by the raw UTF-8 bytes.
void write_string(std::ostream& out, const std::string& value);

// All readers throw InputError("truncated ...") when the stream ends early.
std::uint8_t read_u8(std::istream& in);
std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::int32_t read_i32(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
void read_f32_array(std::istream& in, std::span<float> values);
std::string read_string(std::istream& in, std::uint32_t max_length = 1u << 16);

}  // namespace spermflow::io

#pragma once

// Byte-level helpers for the on-disk formats: base64 weight blocks,
// little-endian float packing, stable content hashes and fixed-precision
// number printing.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace superlex::codec {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Values are narrowed to f32 before packing.
std::string pack_f32(std::span<const double> values);
std::vector<double> unpack_f32(std::string_view b64, std::size_t expected_len);

std::string pack_f64(std::span<const double> values);
std::vector<double> unpack_f64(std::string_view b64, std::size_t expected_len);

// FNV-1a 64, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::string_view bytes);

// 9 significant digits, "%.9g".
std::string fmt9(double v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace superlex::codec

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iddm {

std::string base64_encode(const unsigned char* data, std::size_t n);
std::vector<unsigned char> base64_decode(const std::string& text);

// Little-endian byte images of IEEE doubles; bit-exact round trip.
std::string doubles_to_b64(const std::vector<double>& v);
std::vector<double> b64_to_doubles(const std::string& text);

std::uint32_t crc32_bytes(const unsigned char* data, std::size_t n);
std::uint32_t crc32_doubles(const std::vector<double>& v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace iddm

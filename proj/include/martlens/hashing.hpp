#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace martlens {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

// CRC-32 (IEEE 802.3, as in zlib/PNG).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t crc32(std::string_view bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws Error(kBadFraming) on characters outside the standard alphabet.
std::string base64_decode(std::string_view text);

}  // namespace martlens

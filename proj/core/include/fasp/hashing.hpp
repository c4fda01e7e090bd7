#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace fasp {

/// Hex SHA-256 of raw bytes; used for content digests in caches and provenance.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// First 64 bits of SHA-256, for deriving RNG streams from names.
std::uint64_t stable_hash64(std::string_view text);

/// CRC-32 (zlib polynomial).
std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace fasp

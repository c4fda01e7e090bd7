#include "fasp/hashing.hpp"

#include <openssl/sha.h>
#include <zlib.h>

#include <algorithm>
#include <array>

namespace fasp {
namespace {

std::array<unsigned char, SHA256_DIGEST_LENGTH> digest(const void* data, std::size_t n) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> out{};
  SHA256(static_cast<const unsigned char*>(data), n, out.data());
  return out;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto d = digest(bytes.data(), bytes.size());
  std::string s;
  s.reserve(d.size() * 2);
  for (unsigned char c : d) {
    s.push_back(kHex[c >> 4]);
    s.push_back(kHex[c & 0xf]);
  }
  return s;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint64_t stable_hash64(std::string_view text) {
  const auto d = digest(text.data(), text.size());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
  return v;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace fasp

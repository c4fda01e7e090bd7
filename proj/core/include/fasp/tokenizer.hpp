#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fasp {

using TokenId = std::int32_t;

struct SpecialTokens {
  TokenId bos = 0;
  TokenId eos = 1;
  TokenId unk = 2;

  friend bool operator==(const SpecialTokens&, const SpecialTokens&) = default;
};

/// Immutable text <-> token-id mapping.
///
/// Byte-level mode: ids 0..2 are bos/eos/unk and byte b maps to b + 3 (V = 259).
/// Word-level mode: whitespace-split words looked up in a table; specials take
/// the ids given, and the listed words fill the remaining ids in order.
class Vocab {
 public:
  enum class Mode { kByteLevel, kWordLevel };

  static constexpr TokenId kByteOffset = 3;
  static constexpr std::size_t kByteVocabSize = 259;

  static Vocab byte_level();
  static Vocab word_level(const std::vector<std::string>& words, SpecialTokens specials);
  /// Reads {"tokens": [...], "specials": {"bos":..,"eos":..,"unk":..}}.
  static Vocab load_word_level(const std::filesystem::path& path);

  Mode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return size_; }
  const SpecialTokens& specials() const noexcept { return specials_; }
  bool is_special(TokenId id) const noexcept;

  std::vector<TokenId> encode(std::string_view text) const;
  /// Specials are dropped. Throws OutOfRangeError for ids >= size().
  std::string decode(std::span<const TokenId> ids) const;

  /// Content digest, stable across runs.
  std::string fingerprint() const;

 private:
  Vocab() = default;

  Mode mode_ = Mode::kByteLevel;
  std::size_t size_ = 0;
  SpecialTokens specials_;
  std::unordered_map<std::string, TokenId> word_to_id_;
  std::vector<std::string> id_to_word_;
};

}  // namespace fasp

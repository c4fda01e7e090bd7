#include "fasp/tokenizer.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "fasp/error.hpp"
#include "fasp/hashing.hpp"

namespace fasp {

Vocab Vocab::byte_level() {
  Vocab v;
  v.mode_ = Mode::kByteLevel;
  v.size_ = kByteVocabSize;
  v.specials_ = SpecialTokens{0, 1, 2};
  return v;
}

Vocab Vocab::word_level(const std::vector<std::string>& words, SpecialTokens specials) {
  Vocab v;
  v.mode_ = Mode::kWordLevel;
  v.size_ = words.size() + 3;
  v.specials_ = specials;
  const std::set<TokenId> special_ids{specials.bos, specials.eos, specials.unk};
  if (special_ids.size() != 3) throw InvalidArgumentError("vocab: special token ids must be distinct");
  for (TokenId id : special_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v.size_) {
      throw InvalidArgumentError("vocab: special token id " + std::to_string(id) + " out of range");
    }
  }
  v.id_to_word_.assign(v.size_, std::string());
  TokenId next = 0;
  for (const auto& w : words) {
    if (w.empty()) throw InvalidArgumentError("vocab: empty token");
    while (special_ids.contains(next)) ++next;
    if (!v.word_to_id_.emplace(w, next).second) {
      throw InvalidArgumentError("vocab: duplicate token '" + w + "'");
    }
    v.id_to_word_[static_cast<std::size_t>(next)] = w;
    ++next;
  }
  return v;
}

Vocab Vocab::load_word_level(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocab file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    return word_level(j.at("tokens").get<std::vector<std::string>>(),
                      SpecialTokens{j.at("specials").at("bos").get<TokenId>(),
                                    j.at("specials").at("eos").get<TokenId>(),
                                    j.at("specials").at("unk").get<TokenId>()});
  } catch (const nlohmann::json::exception& e) {
    throw InputError("vocab file " + path.string() + ": " + e.what());
  }
}

bool Vocab::is_special(TokenId id) const noexcept {
  return id == specials_.bos || id == specials_.eos || id == specials_.unk;
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  if (mode_ == Mode::kByteLevel) {
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<TokenId>(c) + kByteOffset);
    return ids;
  }
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) {
      auto it = word_to_id_.find(std::string(text.substr(i, j - i)));
      ids.push_back(it == word_to_id_.end() ? specials_.unk : it->second);
    }
    i = j;
  }
  // Whitespace-only text still yields one token.
  if (ids.empty() && !text.empty()) ids.push_back(specials_.unk);
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  bool first = true;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= size_) {
      throw OutOfRangeError("token id " + std::to_string(id) + " out of range for vocab of size " +
                            std::to_string(size_));
    }
    if (is_special(id)) continue;
    if (mode_ == Mode::kByteLevel) {
      out.push_back(static_cast<char>(id - kByteOffset));
    } else {
      if (!first) out.push_back(' ');
      out += id_to_word_[static_cast<std::size_t>(id)];
      first = false;
    }
  }
  return out;
}

std::string Vocab::fingerprint() const {
  nlohmann::json j;
  j["mode"] = mode_ == Mode::kByteLevel ? "byte" : "word";
  j["specials"] = {specials_.bos, specials_.eos, specials_.unk};
  if (mode_ == Mode::kWordLevel) j["words"] = id_to_word_;
  return sha256_hex(j.dump());
}

}  // namespace fasp

#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace fasp {

/// Identifies one cached scalar. `head` is a flat head index, or nullopt for
/// the all-heads-present baseline.
struct CacheKey {
  std::string model_hash;
  /// Digest over every other input (corpus, dataset, scorer, generation params...).
  std::string inputs_hash;
  std::string metric;
  std::string category;  // empty for metrics without a category
  std::optional<int> head;
};

/// On-disk cache at <root>/<model_hash>/<metric>[.<category>].json holding
///   {"model_hash", "metric", "category", "inputs_hash", "baseline", "heads": {"<idx>": v}}
/// A file whose inputs_hash differs from the key is a miss and is replaced on
/// the next put. Writes go through a temp file and rename. Values round-trip
/// bit-exactly.
class ScoreCache {
 public:
  explicit ScoreCache(std::filesystem::path root);

  std::optional<double> get(const CacheKey& key) const;
  void put(const CacheKey& key, double value) const;

  std::filesystem::path file_for(const CacheKey& key) const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
};

}  // namespace fasp

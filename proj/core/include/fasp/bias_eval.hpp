#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fasp/model.hpp"
#include "fasp/scorer.hpp"
#include "fasp/tokenizer.hpp"

namespace fasp {

struct PromptRecord {
  std::string bias_category;
  std::string subgroup;
  std::string text;

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

/// Prompts grouped as category -> subgroup -> record indices.
class PromptDataset {
 public:
  using SubgroupIndex = std::map<std::string, std::vector<std::size_t>>;
  using Index = std::map<std::string, SubgroupIndex>;

  PromptDataset() = default;
  /// Validates every record and builds the index.
  explicit PromptDataset(std::vector<PromptRecord> records);

  const std::vector<PromptRecord>& records() const noexcept { return records_; }
  const Index& index() const noexcept { return index_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool has_category(std::string_view category) const;
  std::vector<std::string> categories() const;
  /// Throws InvalidArgumentError for an unknown category.
  const SubgroupIndex& subgroups(std::string_view category) const;

  std::string fingerprint() const;

 private:
  std::vector<PromptRecord> records_;
  Index index_;
};

/// JSON lines with fields bias_category, subgroup, text. Empty lines are skipped.
/// `source` prefixes error messages.
PromptDataset parse_prompts(std::istream& in, std::string_view source = {});
PromptDataset load_prompts(const std::filesystem::path& path);

struct SplitDataset {
  PromptDataset validation;
  PromptDataset test;
  std::uint64_t split_seed = 0;
};

/// Stratified per (category, subgroup): records are shuffled with
/// CounterRng(seed, stable_hash64(category + '\x1f' + subgroup)) and the first
/// ceil(val_ratio * n) go to validation. Both halves keep original record order.
SplitDataset split(const PromptDataset& d, double val_ratio, std::uint64_t seed);

struct BiasReport {
  std::string category;
  std::map<std::string, double> subgroup_means;
  double grand_mean = 0.0;
  double bias = 0.0;
  std::map<std::string, std::int64_t> n_prompts;
};

/// bias = sum over subgroups |mean_s - grand_mean|, grand_mean the unweighted
/// mean of subgroup means. Needs at least two subgroups with one score each.
BiasReport bias_metric(const std::map<std::string, std::vector<ToxicityScore>>& tox_by_subgroup,
                       std::string category = {});

nlohmann::json to_json(const BiasReport& r);
BiasReport bias_report_from_json(const nlohmann::json& j);

struct GenerationParams {
  int max_new = 20;
  float temperature = 1.0f;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  std::string fingerprint() const;
};

struct BiasEvaluation {
  BiasReport pooled;
  std::map<std::uint64_t, BiasReport> per_seed;
};

/// Generates one continuation per (prompt, seed) for every prompt of the
/// category, scores the continuations, pools scores per subgroup and applies
/// bias_metric. Prompts are encoded with `vocab`; eos ends a continuation.
BiasEvaluation evaluate_model_bias(const ModelConfig& cfg, const ModelWeights& w,
                                   const HeadGateMask& mask, const Vocab& vocab,
                                   const PromptDataset& d, std::string_view category,
                                   const ToxicityScorer& scorer, const GenerationParams& gen,
                                   int concurrency = 1);

/// Continuations in (prompt order within category, seed) order; exposed for
/// inspection and composition tests.
struct Continuation {
  std::size_t record_index;
  std::uint64_t seed;
  std::string text;
};
std::vector<Continuation> generate_continuations(const ModelConfig& cfg, const ModelWeights& w,
                                                 const HeadGateMask& mask, const Vocab& vocab,
                                                 const PromptDataset& d, std::string_view category,
                                                 const GenerationParams& gen, int concurrency = 1);

}  // namespace fasp

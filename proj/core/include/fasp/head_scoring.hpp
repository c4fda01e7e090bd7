#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fasp/bias_eval.hpp"
#include "fasp/model.hpp"
#include "fasp/score_cache.hpp"
#include "fasp/scorer.hpp"
#include "fasp/tokenizer.hpp"

namespace fasp {

/// Scores for one head. Both metrics use value(present) - value(absent).
struct HeadScore {
  HeadId head;
  std::optional<double> z_ppl;
  std::map<std::string, double> z_bias;
};

struct ScoreHashes {
  std::string model;
  std::string dataset;
  std::string corpus;
  std::string scorer;
  std::string gen_params;

  friend bool operator==(const ScoreHashes&, const ScoreHashes&) = default;
};

struct HeadScoreTable {
  int n_layers = 0;
  int n_heads_per_layer = 0;
  std::vector<HeadScore> scores;  // indexed by flat head index
  ScoreHashes hashes;
  double baseline_ppl = 0.0;
  std::map<std::string, double> baseline_bias;

  /// Empty entries for every head of cfg.
  static HeadScoreTable for_model(const ModelConfig& cfg);

  int n_heads() const noexcept { return n_layers * n_heads_per_layer; }
  /// Throws InvalidArgumentError if entries are not one per flat index or a value is non-finite.
  void validate() const;
  /// z_ppl for all heads; MissingScoreError if any is absent.
  std::vector<double> z_ppl_vector() const;
  /// z_bias(category) for all heads; MissingScoreError if any is absent.
  std::vector<double> z_bias_vector(const std::string& category) const;
  std::vector<std::string> bias_categories() const;
};

nlohmann::json to_json(const HeadScoreTable& t);
HeadScoreTable table_from_json(const nlohmann::json& j);
void save_table(const HeadScoreTable& t, const std::filesystem::path& path,
                const nlohmann::json& provenance = nullptr);
HeadScoreTable load_table(const std::filesystem::path& path);

std::string corpus_hash(std::span<const TokenId> corpus);

struct ScoringStats {
  std::atomic<std::int64_t> ppl_evaluations{0};
  std::atomic<std::int64_t> bias_evaluations{0};
  std::atomic<std::int64_t> cache_hits{0};
  std::atomic<std::int64_t> cache_misses{0};
};

struct ScoringOptions {
  const ScoreCache* cache = nullptr;
  int concurrency = 1;
  ScoringStats* stats = nullptr;
};

struct PplScores {
  double baseline_ppl = 0.0;
  std::vector<double> z_ppl;  // by flat index
};

/// Baseline perplexity plus, for every head, baseline - ppl(head gated off).
/// N_h + 1 perplexity evaluations, minus cache hits.
PplScores score_ppl_all(const ModelConfig& cfg, const ModelWeights& w,
                        std::span<const TokenId> corpus, int window,
                        const ScoringOptions& options = {});

struct BiasScores {
  double baseline_bias = 0.0;
  std::map<int, double> z_bias;  // flat index -> score
};

struct BiasScoringInputs {
  const Vocab* vocab = nullptr;
  const PromptDataset* dataset = nullptr;
  std::string category;
  const ToxicityScorer* scorer = nullptr;
  GenerationParams gen;
};

/// Baseline bias once, then baseline - bias(head gated off) for each head in `heads`.
BiasScores score_bias_all(const ModelConfig& cfg, const ModelWeights& w,
                          const BiasScoringInputs& inputs, std::span<const HeadId> heads,
                          const ScoringOptions& options = {});

enum class BiasScope { kAllHeads, kNonCritical };

struct ScoreHeadsRequest {
  std::span<const TokenId> corpus;
  int window = 128;
  const Vocab* vocab = nullptr;
  const PromptDataset* validation = nullptr;
  std::vector<std::string> categories;
  const ToxicityScorer* scorer = nullptr;
  GenerationParams gen;
  BiasScope scope = BiasScope::kAllHeads;
  double gamma = 0.3;
};

/// Steps 1-3 of the pruning procedure: z_ppl for every head, then z_bias per
/// category for every head (kAllHeads) or only the heads outside the
/// floor(gamma * N_h) most performance-critical ones (kNonCritical).
HeadScoreTable score_heads(const ModelConfig& cfg, const ModelWeights& w,
                           const ScoreHeadsRequest& request, const ScoringOptions& options = {});

}  // namespace fasp

#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fasp {

/// Toxicity in [0, 1].
class ToxicityScore {
 public:
  constexpr ToxicityScore() = default;
  explicit ToxicityScore(double value);

  constexpr double value() const noexcept { return value_; }

  friend bool operator==(const ToxicityScore&, const ToxicityScore&) = default;

 private:
  double value_ = 0.0;
};

class ToxicityScorer {
 public:
  virtual ~ToxicityScorer() = default;

  /// One score per text, same order.
  virtual std::vector<ToxicityScore> score(std::span<const std::string> texts) const = 0;

  /// Digest of everything that influences scores; part of cache keys.
  virtual std::string fingerprint() const = 0;
};

std::vector<ToxicityScore> score_toxicity(const ToxicityScorer& scorer,
                                          std::span<const std::string> texts);

/// tox(text) = 1 - prod over words w of (1 - weight(w)), unknown words weigh 0.
/// Words are lowercased runs of bytes split at ASCII whitespace and punctuation.
class LexiconScorer final : public ToxicityScorer {
 public:
  explicit LexiconScorer(std::map<std::string, double> weights);

  /// TSV lines `word<TAB>weight`. Blank lines and lines starting with '#' are skipped.
  static LexiconScorer load(const std::filesystem::path& path);

  static std::vector<std::string> words(std::string_view text);

  double score_one(std::string_view text) const;
  std::vector<ToxicityScore> score(std::span<const std::string> texts) const override;
  std::string fingerprint() const override;

  const std::map<std::string, double>& weights() const noexcept { return weights_; }

 private:
  std::map<std::string, double> weights_;
};

struct RemoteScorerOptions {
  /// Base URL, e.g. "http://127.0.0.1:8080". Requests go to POST <url>/score.
  std::string url;
  std::chrono::milliseconds timeout{10000};
  /// Extra attempts after the first failure.
  int retries = 2;
  /// Maximum requests in flight at once.
  int concurrency_limit = 4;
  std::size_t batch_size = 32;
};

/// Client for an HTTP classifier: request {"texts": [...]}, response
/// {"scores": [...]} of equal length. Timeouts, non-2xx statuses and
/// malformed bodies raise ScorerTimeoutError, ScorerHttpError and
/// ScorerProtocolError; all three are retried up to `retries` times.
class RemoteScorer final : public ToxicityScorer {
 public:
  explicit RemoteScorer(RemoteScorerOptions options);

  std::vector<ToxicityScore> score(std::span<const std::string> texts) const override;
  std::string fingerprint() const override;

  const RemoteScorerOptions& options() const noexcept { return options_; }

 private:
  std::vector<ToxicityScore> score_batch(std::span<const std::string> texts) const;
  std::vector<ToxicityScore> score_batch_once(std::span<const std::string> texts) const;

  RemoteScorerOptions options_;
  std::string scheme_host_port_;
  std::string base_path_;
};

}  // namespace fasp

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fasp/numerics.hpp"
#include "fasp/tokenizer.hpp"

namespace fasp {

struct ModelConfig {
  int n_layers = 0;
  int n_heads_per_layer = 0;
  int d_model = 0;
  int d_head = 0;
  int d_ff = 0;
  int vocab_size = 0;
  int max_seq_len = 0;
  float ln_eps = 1e-5f;

  int n_heads() const noexcept { return n_layers * n_heads_per_layer; }
  /// Throws InvalidArgumentError unless every dimension is positive and
  /// d_model == n_heads_per_layer * d_head.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
  TensorF32 ln1_gain, ln1_bias;
  TensorF32 w_q, b_q, w_k, b_k, w_v, b_v;
  TensorF32 w_o, b_o;
  TensorF32 ln2_gain, ln2_bias;
  TensorF32 w_ff1, b_ff1, w_ff2, b_ff2;

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

/// Pre-norm decoder weights. Projections multiply row vectors from the
/// right: q = x * w_q + b_q. Head h owns columns [h*d_head, (h+1)*d_head) of
/// w_q/w_k/w_v and the same rows of w_o.
struct ModelWeights {
  TensorF32 token_embedding;     // [V x d_model]
  TensorF32 position_embedding;  // [max_seq_len x d_model]
  std::vector<LayerWeights> layers;
  TensorF32 lnf_gain, lnf_bias;
  TensorF32 unembed;  // [d_model x V]

  /// Zero-initialized weights with shapes matching cfg.
  static ModelWeights zeros(const ModelConfig& cfg);
  /// Throws ShapeError / NonFiniteError if inconsistent with cfg.
  void validate(const ModelConfig& cfg) const;

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

struct HeadId {
  int layer = 0;
  int head = 0;
  int flat_index = 0;

  static HeadId from_flat(int flat_index, int heads_per_layer);
  static HeadId from_layer_head(int layer, int head, int heads_per_layer);

  friend bool operator==(const HeadId&, const HeadId&) = default;
  friend auto operator<=>(const HeadId& a, const HeadId& b) { return a.flat_index <=> b.flat_index; }
};

/// Per-head multiplicative gates applied to each head's context vector.
/// 1 = present, 0 = ablated. Values up to kMaxGate are accepted so that
/// central finite differences can probe around 1.
class HeadGateMask {
 public:
  static constexpr float kMaxGate = 2.0f;

  static HeadGateMask all_present(int n_heads);
  explicit HeadGateMask(std::vector<float> gates);

  std::size_t size() const noexcept { return gates_.size(); }
  float operator[](std::size_t i) const noexcept { return gates_[i]; }
  void set(std::size_t flat_index, float value);
  std::span<const float> gates() const noexcept { return gates_; }

  friend bool operator==(const HeadGateMask&, const HeadGateMask&) = default;

 private:
  std::vector<float> gates_;
};

struct PerplexityResult {
  double ppl = 0.0;
  std::int64_t total_tokens = 0;
  double mean_nll = 0.0;  // nats per predicted token
};

/// Logits [T x V] for a token sequence with per-head gating.
TensorF32 forward_logits(const ModelConfig& cfg, const ModelWeights& w, const HeadGateMask& mask,
                         std::span<const TokenId> tokens);

/// Same computation with no gate multiplication at all.
TensorF32 forward_logits(const ModelConfig& cfg, const ModelWeights& w,
                         std::span<const TokenId> tokens);

/// Corpus split into non-overlapping windows of `window` tokens; each window of
/// length L contributes L-1 next-token predictions. NLL accumulates in double.
PerplexityResult perplexity(const ModelConfig& cfg, const ModelWeights& w, const HeadGateMask& mask,
                            std::span<const TokenId> corpus, int window);

struct SamplingParams {
  int max_new = 20;
  float temperature = 1.0f;
  std::uint64_t seed = 1;
  /// Generation stops (without emitting it) when this token is produced.
  std::optional<TokenId> eos;
};

/// Continuation only. Temperature 0 is greedy with ties to the lowest id;
/// otherwise token k at step s is drawn by inverse CDF over
/// softmax(logits / T) with u = CounterRng(seed, s).uniform(0).
/// Once the context reaches max_seq_len, the oldest tokens are dropped.
std::vector<TokenId> generate(const ModelConfig& cfg, const ModelWeights& w,
                              const HeadGateMask& mask, std::span<const TokenId> prompt,
                              const SamplingParams& params);

}  // namespace fasp

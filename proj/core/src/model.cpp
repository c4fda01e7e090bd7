#include "fasp/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fasp/error.hpp"
#include "fasp/rng.hpp"

namespace fasp {
namespace {

using Shape = std::vector<std::size_t>;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

void expect_shape(const TensorF32& t, const Shape& shape, const std::string& name) {
  if (t.shape() != shape) throw ShapeError("weight '" + name + "' has unexpected shape");
  require_finite(t, "weight '" + name + "'");
}

TensorF32 linear(const TensorF32& x, const TensorF32& w, const TensorF32& b) {
  TensorF32 y = matmul(x, w);
  add_row_bias(y, b);
  return y;
}

// Causal multi-head attention followed by the output projection. `mask` is
// null for the ungated reference path.
TensorF32 attention(const ModelConfig& cfg, const LayerWeights& lw, const TensorF32& h,
                    const float* gates) {
  const std::size_t T = h.rows();
  const std::size_t dh = sz(cfg.d_head);
  const TensorF32 q = linear(h, lw.w_q, lw.b_q);
  const TensorF32 k = linear(h, lw.w_k, lw.b_k);
  const TensorF32 v = linear(h, lw.w_v, lw.b_v);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  TensorF32 context({T, sz(cfg.d_model)});
  std::vector<float> probs(T);
  for (int head = 0; head < cfg.n_heads_per_layer; ++head) {
    const std::size_t off = sz(head) * dh;
    for (std::size_t t = 0; t < T; ++t) {
      const float* qt = &q.row(t)[off];
      float mx = -INFINITY;
      for (std::size_t s = 0; s <= t; ++s) {
        const float* ks = &k.row(s)[off];
        float dot = 0.0f;
        for (std::size_t d = 0; d < dh; ++d) dot += qt[d] * ks[d];
        probs[s] = dot * scale;
        mx = std::max(mx, probs[s]);
      }
      float sum = 0.0f;
      for (std::size_t s = 0; s <= t; ++s) {
        probs[s] = std::exp(probs[s] - mx);
        sum += probs[s];
      }
      float* ct = &context.row(t)[off];
      for (std::size_t s = 0; s <= t; ++s) {
        const float p = probs[s] / sum;
        const float* vs = &v.row(s)[off];
        for (std::size_t d = 0; d < dh; ++d) ct[d] += p * vs[d];
      }
      if (gates != nullptr) {
        const float g = gates[head];
        for (std::size_t d = 0; d < dh; ++d) ct[d] *= g;
      }
    }
  }
  require_finite(context, "attention");
  return linear(context, lw.w_o, lw.b_o);
}

TensorF32 forward_impl(const ModelConfig& cfg, const ModelWeights& w, const float* gates,
                       std::span<const TokenId> tokens) {
  const std::size_t T = tokens.size();
  if (T == 0) throw InvalidArgumentError("forward: empty token sequence");
  if (T > sz(cfg.max_seq_len)) {
    throw OutOfRangeError("forward: sequence of " + std::to_string(T) +
                          " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  const std::size_t d = sz(cfg.d_model);
  TensorF32 x({T, d});
  for (std::size_t t = 0; t < T; ++t) {
    const TokenId id = tokens[t];
    if (id < 0 || id >= cfg.vocab_size) {
      throw OutOfRangeError("forward: token id " + std::to_string(id) + " out of range");
    }
    auto row = x.row(t);
    auto te = w.token_embedding.row(sz(id));
    auto pe = w.position_embedding.row(t);
    for (std::size_t c = 0; c < d; ++c) row[c] = te[c] + pe[c];
  }

  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const LayerWeights& lw = w.layers[l];
    const float* layer_gates = gates ? gates + l * sz(cfg.n_heads_per_layer) : nullptr;
    const TensorF32 attn =
        attention(cfg, lw, layer_norm(x, lw.ln1_gain, lw.ln1_bias, cfg.ln_eps), layer_gates);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += attn.data()[i];

    TensorF32 ff = gelu(linear(layer_norm(x, lw.ln2_gain, lw.ln2_bias, cfg.ln_eps), lw.w_ff1,
                               lw.b_ff1));
    ff = linear(ff, lw.w_ff2, lw.b_ff2);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += ff.data()[i];
    require_finite(x, "residual stream");
  }
  return matmul(layer_norm(x, w.lnf_gain, w.lnf_bias, cfg.ln_eps), w.unembed);
}

void check_mask(const ModelConfig& cfg, const HeadGateMask& mask) {
  if (mask.size() != sz(cfg.n_heads())) {
    throw ShapeError("gate mask has " + std::to_string(mask.size()) + " entries, model has " +
                     std::to_string(cfg.n_heads()) + " heads");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads_per_layer < 1 || d_model < 1 || d_head < 1 || d_ff < 1 ||
      vocab_size < 1 || max_seq_len < 1) {
    throw InvalidArgumentError("model config: all dimensions must be >= 1");
  }
  if (d_model != n_heads_per_layer * d_head) {
    throw InvalidArgumentError("model config: d_model must equal n_heads_per_layer * d_head");
  }
  if (!(ln_eps > 0.0f) || !std::isfinite(ln_eps)) {
    throw InvalidArgumentError("model config: ln_eps must be positive");
  }
}

ModelWeights ModelWeights::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = sz(cfg.d_model), f = sz(cfg.d_ff), v = sz(cfg.vocab_size);
  ModelWeights w;
  w.token_embedding = TensorF32({v, d});
  w.position_embedding = TensorF32({sz(cfg.max_seq_len), d});
  w.layers.resize(sz(cfg.n_layers));
  for (auto& l : w.layers) {
    l.ln1_gain = TensorF32({d});
    l.ln1_bias = TensorF32({d});
    l.w_q = TensorF32({d, d});
    l.b_q = TensorF32({d});
    l.w_k = TensorF32({d, d});
    l.b_k = TensorF32({d});
    l.w_v = TensorF32({d, d});
    l.b_v = TensorF32({d});
    l.w_o = TensorF32({d, d});
    l.b_o = TensorF32({d});
    l.ln2_gain = TensorF32({d});
    l.ln2_bias = TensorF32({d});
    l.w_ff1 = TensorF32({d, f});
    l.b_ff1 = TensorF32({f});
    l.w_ff2 = TensorF32({f, d});
    l.b_ff2 = TensorF32({d});
  }
  w.lnf_gain = TensorF32({d});
  w.lnf_bias = TensorF32({d});
  w.unembed = TensorF32({d, v});
  return w;
}

void ModelWeights::validate(const ModelConfig& cfg) const {
  cfg.validate();
  const std::size_t d = sz(cfg.d_model), f = sz(cfg.d_ff), v = sz(cfg.vocab_size);
  expect_shape(token_embedding, {v, d}, "token_embedding");
  expect_shape(position_embedding, {sz(cfg.max_seq_len), d}, "position_embedding");
  if (layers.size() != sz(cfg.n_layers)) throw ShapeError("weights: wrong number of layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    expect_shape(l.ln1_gain, {d}, p + "ln1.gain");
    expect_shape(l.ln1_bias, {d}, p + "ln1.bias");
    expect_shape(l.w_q, {d, d}, p + "attn.w_q");
    expect_shape(l.b_q, {d}, p + "attn.b_q");
    expect_shape(l.w_k, {d, d}, p + "attn.w_k");
    expect_shape(l.b_k, {d}, p + "attn.b_k");
    expect_shape(l.w_v, {d, d}, p + "attn.w_v");
    expect_shape(l.b_v, {d}, p + "attn.b_v");
    expect_shape(l.w_o, {d, d}, p + "attn.w_o");
    expect_shape(l.b_o, {d}, p + "attn.b_o");
    expect_shape(l.ln2_gain, {d}, p + "ln2.gain");
    expect_shape(l.ln2_bias, {d}, p + "ln2.bias");
    expect_shape(l.w_ff1, {d, f}, p + "ff.w_1");
    expect_shape(l.b_ff1, {f}, p + "ff.b_1");
    expect_shape(l.w_ff2, {f, d}, p + "ff.w_2");
    expect_shape(l.b_ff2, {d}, p + "ff.b_2");
  }
  expect_shape(lnf_gain, {d}, "ln_f.gain");
  expect_shape(lnf_bias, {d}, "ln_f.bias");
  expect_shape(unembed, {d, v}, "unembed");
}

HeadId HeadId::from_flat(int flat_index, int heads_per_layer) {
  if (flat_index < 0 || heads_per_layer < 1) throw OutOfRangeError("invalid head index");
  return HeadId{flat_index / heads_per_layer, flat_index % heads_per_layer, flat_index};
}

HeadId HeadId::from_layer_head(int layer, int head, int heads_per_layer) {
  if (layer < 0 || head < 0 || head >= heads_per_layer) throw OutOfRangeError("invalid head id");
  return HeadId{layer, head, layer * heads_per_layer + head};
}

HeadGateMask HeadGateMask::all_present(int n_heads) {
  return HeadGateMask(std::vector<float>(sz(n_heads), 1.0f));
}

HeadGateMask::HeadGateMask(std::vector<float> gates) : gates_(std::move(gates)) {
  for (std::size_t i = 0; i < gates_.size(); ++i) set(i, gates_[i]);
}

void HeadGateMask::set(std::size_t flat_index, float value) {
  if (flat_index >= gates_.size()) throw OutOfRangeError("gate index out of range");
  if (!(value >= 0.0f && value <= kMaxGate)) {
    throw InvalidArgumentError("gate value " + std::to_string(value) + " outside [0, 2]");
  }
  gates_[flat_index] = value;
}

TensorF32 forward_logits(const ModelConfig& cfg, const ModelWeights& w, const HeadGateMask& mask,
                         std::span<const TokenId> tokens) {
  check_mask(cfg, mask);
  return forward_impl(cfg, w, mask.gates().data(), tokens);
}

TensorF32 forward_logits(const ModelConfig& cfg, const ModelWeights& w,
                         std::span<const TokenId> tokens) {
  return forward_impl(cfg, w, nullptr, tokens);
}

PerplexityResult perplexity(const ModelConfig& cfg, const ModelWeights& w, const HeadGateMask& mask,
                            std::span<const TokenId> corpus, int window) {
  check_mask(cfg, mask);
  if (corpus.size() < 2) throw InvalidArgumentError("perplexity: corpus needs at least 2 tokens");
  if (window < 2 || window > cfg.max_seq_len) {
    throw InvalidArgumentError("perplexity: window must be in [2, max_seq_len]");
  }
  double total_nll = 0.0;
  std::int64_t predicted = 0;
  for (std::size_t start = 0; start < corpus.size(); start += sz(window)) {
    const std::size_t len = std::min(sz(window), corpus.size() - start);
    if (len < 2) break;
    const auto chunk = corpus.subspan(start, len);
    const TensorF32 logits = forward_impl(cfg, w, mask.gates().data(), chunk);
    for (std::size_t t = 0; t + 1 < len; ++t) {
      const auto row = logits.row(t);
      double mx = row[0];
      for (float v : row) mx = std::max(mx, static_cast<double>(v));
      double sum = 0.0;
      for (float v : row) sum += std::exp(static_cast<double>(v) - mx);
      const double lse = mx + std::log(sum);
      total_nll += lse - static_cast<double>(row[sz(chunk[t + 1])]);
      ++predicted;
    }
  }
  PerplexityResult r;
  r.total_tokens = predicted;
  r.mean_nll = total_nll / static_cast<double>(predicted);
  r.ppl = std::exp(r.mean_nll);
  if (!std::isfinite(r.ppl)) throw NonFiniteError("perplexity is not finite");
  return r;
}

std::vector<TokenId> generate(const ModelConfig& cfg, const ModelWeights& w,
                              const HeadGateMask& mask, std::span<const TokenId> prompt,
                              const SamplingParams& params) {
  check_mask(cfg, mask);
  if (prompt.empty()) throw InvalidArgumentError("generate: empty prompt");
  if (prompt.size() > sz(cfg.max_seq_len)) {
    throw OutOfRangeError("generate: prompt of " + std::to_string(prompt.size()) +
                          " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  if (!(params.temperature >= 0.0f) || !std::isfinite(params.temperature)) {
    throw InvalidArgumentError("generate: temperature must be >= 0");
  }
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  std::vector<double> weights(sz(cfg.vocab_size));
  for (int step = 0; step < params.max_new; ++step) {
    const std::size_t n = std::min(context.size(), sz(cfg.max_seq_len));
    const std::span<const TokenId> window(context.data() + context.size() - n, n);
    const TensorF32 logits = forward_impl(cfg, w, mask.gates().data(), window);
    const auto last = logits.row(n - 1);

    TokenId next = 0;
    if (params.temperature == 0.0f) {
      next = static_cast<TokenId>(std::max_element(last.begin(), last.end()) - last.begin());
    } else {
      const double temp = params.temperature;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < last.size(); ++k) {
        weights[k] = static_cast<double>(last[k]) / temp;
        mx = std::max(mx, weights[k]);
      }
      double total = 0.0;
      for (double& e : weights) {
        e = std::exp(e - mx);
        total += e;
      }
      const double target =
          CounterRng(params.seed, static_cast<std::uint64_t>(step)).uniform(0) * total;
      double acc = 0.0;
      next = -1;
      for (std::size_t k = 0; k < weights.size(); ++k) {
        acc += weights[k];
        if (target < acc) {
          next = static_cast<TokenId>(k);
          break;
        }
      }
      if (next < 0) {
        // Rounding left target >= acc; take the last token with mass.
        for (std::size_t k = weights.size(); k-- > 0;) {
          if (weights[k] > 0.0) {
            next = static_cast<TokenId>(k);
            break;
          }
        }
      }
    }
    if (params.eos && next == *params.eos) break;
    out.push_back(next);
    context.push_back(next);
  }
  return out;
}

}  // namespace fasp

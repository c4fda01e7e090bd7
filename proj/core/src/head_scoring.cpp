#include "fasp/head_scoring.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "fasp/error.hpp"
#include "fasp/hashing.hpp"
#include "fasp/ranking.hpp"
#include "fasp/weights_io.hpp"
#include "parallel.hpp"

namespace fasp {
namespace {

void bump(std::atomic<std::int64_t> ScoringStats::*field, const ScoringOptions& o) {
  if (o.stats) ++(o.stats->*field);
}

// Looks the value up in the cache, computing and storing it on a miss.
template <typename Compute>
double cached(const ScoringOptions& o, const CacheKey& key, Compute&& compute) {
  if (o.cache) {
    if (auto hit = o.cache->get(key)) {
      bump(&ScoringStats::cache_hits, o);
      return *hit;
    }
    bump(&ScoringStats::cache_misses, o);
  }
  const double value = compute();
  if (o.cache) o.cache->put(key, value);
  return value;
}

HeadGateMask ablate(int n_heads, int flat) {
  auto mask = HeadGateMask::all_present(n_heads);
  mask.set(static_cast<std::size_t>(flat), 0.0f);
  return mask;
}

std::string ppl_inputs_hash(std::span<const TokenId> corpus, int window) {
  return sha256_hex(corpus_hash(corpus) + "|window=" + std::to_string(window));
}

std::string bias_inputs_hash(const BiasScoringInputs& in) {
  return sha256_hex(in.dataset->fingerprint() + "|" + in.scorer->fingerprint() + "|" +
                    in.gen.fingerprint() + "|" + in.vocab->fingerprint());
}

void require_finite_value(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + " is not finite");
}

}  // namespace

HeadScoreTable HeadScoreTable::for_model(const ModelConfig& cfg) {
  cfg.validate();
  HeadScoreTable t;
  t.n_layers = cfg.n_layers;
  t.n_heads_per_layer = cfg.n_heads_per_layer;
  t.scores.resize(static_cast<std::size_t>(cfg.n_heads()));
  for (int i = 0; i < cfg.n_heads(); ++i) {
    t.scores[static_cast<std::size_t>(i)].head = HeadId::from_flat(i, cfg.n_heads_per_layer);
  }
  return t;
}

void HeadScoreTable::validate() const {
  if (n_layers < 1 || n_heads_per_layer < 1) throw InvalidArgumentError("score table: bad geometry");
  if (scores.size() != static_cast<std::size_t>(n_heads())) {
    throw InvalidArgumentError("score table: expected one entry per head");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    if (s.head.flat_index != static_cast<int>(i) ||
        s.head != HeadId::from_flat(static_cast<int>(i), n_heads_per_layer)) {
      throw InvalidArgumentError("score table: entry " + std::to_string(i) + " has wrong head id");
    }
    if (s.z_ppl && !std::isfinite(*s.z_ppl)) throw InvalidArgumentError("score table: non-finite z_ppl");
    for (const auto& [_, v] : s.z_bias) {
      if (!std::isfinite(v)) throw InvalidArgumentError("score table: non-finite z_bias");
    }
  }
}

std::vector<double> HeadScoreTable::z_ppl_vector() const {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    if (!s.z_ppl) throw MissingScoreError("z_ppl missing for head " + std::to_string(s.head.flat_index));
    out.push_back(*s.z_ppl);
  }
  return out;
}

std::vector<double> HeadScoreTable::z_bias_vector(const std::string& category) const {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    auto it = s.z_bias.find(category);
    if (it == s.z_bias.end()) {
      throw MissingScoreError("z_bias(" + category + ") missing for head " +
                              std::to_string(s.head.flat_index));
    }
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> HeadScoreTable::bias_categories() const {
  std::set<std::string> cats;
  for (const auto& s : scores) {
    for (const auto& [c, _] : s.z_bias) cats.insert(c);
  }
  for (const auto& [c, _] : baseline_bias) cats.insert(c);
  return {cats.begin(), cats.end()};
}

nlohmann::json to_json(const HeadScoreTable& t) {
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& s : t.scores) {
    heads.push_back({{"flat_index", s.head.flat_index},
                     {"layer", s.head.layer},
                     {"head", s.head.head},
                     {"z_ppl", s.z_ppl ? nlohmann::json(*s.z_ppl) : nlohmann::json(nullptr)},
                     {"z_bias", s.z_bias}});
  }
  return {{"n_layers", t.n_layers},
          {"n_heads_per_layer", t.n_heads_per_layer},
          {"head_index_base", 0},
          {"hashes",
           {{"model", t.hashes.model},
            {"dataset", t.hashes.dataset},
            {"corpus", t.hashes.corpus},
            {"scorer", t.hashes.scorer},
            {"gen_params", t.hashes.gen_params}}},
          {"baseline_ppl", t.baseline_ppl},
          {"baseline_bias", t.baseline_bias},
          {"heads", heads}};
}

HeadScoreTable table_from_json(const nlohmann::json& j) {
  HeadScoreTable t;
  try {
    t.n_layers = j.at("n_layers").get<int>();
    t.n_heads_per_layer = j.at("n_heads_per_layer").get<int>();
    const auto& h = j.at("hashes");
    t.hashes = {h.at("model").get<std::string>(), h.at("dataset").get<std::string>(),
                h.at("corpus").get<std::string>(), h.at("scorer").get<std::string>(),
                h.at("gen_params").get<std::string>()};
    t.baseline_ppl = j.at("baseline_ppl").get<double>();
    t.baseline_bias = j.at("baseline_bias").get<std::map<std::string, double>>();
    for (const auto& e : j.at("heads")) {
      HeadScore s;
      s.head = HeadId::from_layer_head(e.at("layer").get<int>(), e.at("head").get<int>(),
                                       t.n_heads_per_layer);
      if (s.head.flat_index != e.at("flat_index").get<int>()) {
        throw InvalidArgumentError("score table: flat_index disagrees with (layer, head)");
      }
      if (!e.at("z_ppl").is_null()) s.z_ppl = e.at("z_ppl").get<double>();
      s.z_bias = e.at("z_bias").get<std::map<std::string, double>>();
      t.scores.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed score table: ") + e.what());
  }
  const auto& h = t.hashes;
  if (h.model.empty() || h.dataset.empty() || h.corpus.empty() || h.scorer.empty() ||
      h.gen_params.empty()) {
    throw InputError("score table: provenance hashes must be non-empty");
  }
  t.validate();
  return t;
}

void save_table(const HeadScoreTable& t, const std::filesystem::path& path,
                const nlohmann::json& provenance) {
  auto j = to_json(t);
  if (!provenance.is_null()) j["provenance"] = provenance;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write score table " + path.string());
  out << j.dump(2) << "\n";
}

HeadScoreTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score table " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("score table " + path.string() + ": " + e.what());
  }
  return table_from_json(j);
}

std::string corpus_hash(std::span<const TokenId> corpus) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(corpus.data()),
                              corpus.size_bytes()));
}

PplScores score_ppl_all(const ModelConfig& cfg, const ModelWeights& w,
                        std::span<const TokenId> corpus, int window,
                        const ScoringOptions& options) {
  const int n = cfg.n_heads();
  CacheKey key{options.cache ? model_hash(cfg, w) : std::string(),
               options.cache ? ppl_inputs_hash(corpus, window) : std::string(), "ppl", "", {}};

  // Slot 0 is the baseline, slot h + 1 the ablation of head h.
  std::vector<double> ppl(static_cast<std::size_t>(n) + 1);
  detail::parallel_for(ppl.size(), options.concurrency, [&](std::size_t slot) {
    CacheKey k = key;
    if (slot > 0) k.head = static_cast<int>(slot) - 1;
    ppl[slot] = cached(options, k, [&] {
      bump(&ScoringStats::ppl_evaluations, options);
      const auto mask = slot == 0 ? HeadGateMask::all_present(n) : ablate(n, *k.head);
      return perplexity(cfg, w, mask, corpus, window).ppl;
    });
    require_finite_value(ppl[slot], "perplexity");
  });

  PplScores out;
  out.baseline_ppl = ppl[0];
  out.z_ppl.reserve(static_cast<std::size_t>(n));
  for (int h = 0; h < n; ++h) out.z_ppl.push_back(ppl[0] - ppl[static_cast<std::size_t>(h) + 1]);
  return out;
}

BiasScores score_bias_all(const ModelConfig& cfg, const ModelWeights& w,
                          const BiasScoringInputs& inputs, std::span<const HeadId> heads,
                          const ScoringOptions& options) {
  if (!inputs.vocab || !inputs.dataset || !inputs.scorer) {
    throw InvalidArgumentError("bias scoring needs a vocab, a dataset and a scorer");
  }
  const int n = cfg.n_heads();
  for (const auto& h : heads) {
    if (h.flat_index < 0 || h.flat_index >= n) throw OutOfRangeError("head outside the model");
  }
  CacheKey key{options.cache ? model_hash(cfg, w) : std::string(),
               options.cache ? bias_inputs_hash(inputs) : std::string(), "bias", inputs.category,
               {}};

  std::vector<double> bias(heads.size() + 1);
  detail::parallel_for(bias.size(), options.concurrency, [&](std::size_t slot) {
    CacheKey k = key;
    if (slot > 0) k.head = heads[slot - 1].flat_index;
    bias[slot] = cached(options, k, [&] {
      bump(&ScoringStats::bias_evaluations, options);
      const auto mask = slot == 0 ? HeadGateMask::all_present(n) : ablate(n, *k.head);
      return evaluate_model_bias(cfg, w, mask, *inputs.vocab, *inputs.dataset, inputs.category,
                                 *inputs.scorer, inputs.gen)
          .pooled.bias;
    });
    require_finite_value(bias[slot], "bias");
  });

  BiasScores out;
  out.baseline_bias = bias[0];
  for (std::size_t i = 0; i < heads.size(); ++i) {
    out.z_bias[heads[i].flat_index] = bias[0] - bias[i + 1];
  }
  return out;
}

HeadScoreTable score_heads(const ModelConfig& cfg, const ModelWeights& w,
                           const ScoreHeadsRequest& request, const ScoringOptions& options) {
  if (!request.vocab || !request.validation || !request.scorer) {
    throw InvalidArgumentError("score_heads needs a vocab, a validation set and a scorer");
  }
  HeadScoreTable table = HeadScoreTable::for_model(cfg);
  table.hashes = {model_hash(cfg, w), request.validation->fingerprint(),
                  sha256_hex(corpus_hash(request.corpus) + "|window=" +
                             std::to_string(request.window)),
                  request.scorer->fingerprint(), request.gen.fingerprint()};

  const auto ppl = score_ppl_all(cfg, w, request.corpus, request.window, options);
  table.baseline_ppl = ppl.baseline_ppl;
  for (std::size_t h = 0; h < ppl.z_ppl.size(); ++h) table.scores[h].z_ppl = ppl.z_ppl[h];

  std::vector<HeadId> subset;
  if (request.scope == BiasScope::kAllHeads) {
    for (const auto& s : table.scores) subset.push_back(s.head);
  } else {
    const auto protected_heads = select_protected(ppl.z_ppl, request.gamma);
    const std::set<int> excluded(protected_heads.begin(), protected_heads.end());
    for (const auto& s : table.scores) {
      if (!excluded.contains(s.head.flat_index)) subset.push_back(s.head);
    }
  }

  for (const auto& category : request.categories) {
    BiasScoringInputs in{request.vocab, request.validation, category, request.scorer, request.gen};
    const auto scores = score_bias_all(cfg, w, in, subset, options);
    table.baseline_bias[category] = scores.baseline_bias;
    for (const auto& [flat, z] : scores.z_bias) {
      table.scores[static_cast<std::size_t>(flat)].z_bias[category] = z;
    }
  }
  return table;
}

}  // namespace fasp

#include "run_config.hpp"

#include <algorithm>
#include <fstream>

#include "fasp/error.hpp"
#include "fasp/hashing.hpp"

namespace fasp::cli {
namespace {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
  if (!lexicon_path.empty() && !scorer_url.empty()) {
    throw InvalidArgumentError("--lexicon and --scorer-url are mutually exclusive");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgumentError("gamma must lie in [0, 1)");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgumentError("alpha must lie in [0, 1]");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw InvalidArgumentError("every alpha must lie in [0, 1]");
  }
  if (!(val_ratio > 0.0 && val_ratio < 1.0)) throw InvalidArgumentError("val_ratio must lie in (0, 1)");
  if (seeds.empty() || score_seeds.empty()) throw InvalidArgumentError("seed lists must be non-empty");
  if (max_new < 0) throw InvalidArgumentError("max_new must be >= 0");
  if (!(temperature >= 0.0)) throw InvalidArgumentError("temperature must be >= 0");
  if (window < 2) throw InvalidArgumentError("window must be >= 2");
  if (!(fd_epsilon > 0.0 && fd_epsilon <= 1.0)) throw InvalidArgumentError("fd_epsilon must lie in (0, 1]");
  if (concurrency_limit < 1) throw InvalidArgumentError("concurrency must be >= 1");
  if (scope != "all" && scope != "non-critical") {
    throw InvalidArgumentError("scope must be 'all' or 'non-critical'");
  }
  if (!(top_ratio >= 0.0 && top_ratio <= 1.0)) throw InvalidArgumentError("top ratio must lie in [0, 1]");
  if (scorer_timeout_ms < 1 || scorer_retries < 0) throw InvalidArgumentError("bad scorer timeout/retries");
}

std::string RunConfig::semantic_hash() const {
  const nlohmann::json j = {{"categories", categories},   {"strategy", strategy},
                            {"strategies", strategies},   {"gamma", gamma},
                            {"alpha", alpha},             {"alphas", alphas},
                            {"seeds", seeds},             {"score_seeds", score_seeds},
                            {"random_seed", random_seed}, {"val_ratio", val_ratio},
                            {"split_seed", split_seed},   {"max_new", max_new},
                            {"temperature", temperature}, {"window", window},
                            {"fd_epsilon", fd_epsilon},   {"scope", scope},
                            {"top_ratio", top_ratio}};
  return sha256_hex(j.dump());
}

void apply_json(RunConfig& cfg, const nlohmann::json& j) {
  static const std::vector<std::string> kKnown = {
      "model_path", "prompts_path", "corpus_path", "lexicon_path", "scorer_url", "vocab_path",
      "table_path", "plan_path", "sweep_path", "cache_dir", "output", "categories", "strategy",
      "strategies", "gamma", "alpha", "alphas", "seeds", "score_seeds", "random_seed", "val_ratio",
      "split_seed", "max_new", "temperature", "window", "fd_epsilon", "concurrency_limit", "scope",
      "top_ratio", "scorer_timeout_ms", "scorer_retries", "use_cache"};
  if (!j.is_object()) throw InputError("config file must hold a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      throw InputError("unknown config key '" + key + "'");
    }
  }
  try {
    take(j, "model_path", cfg.model_path);
    take(j, "prompts_path", cfg.prompts_path);
    take(j, "corpus_path", cfg.corpus_path);
    take(j, "lexicon_path", cfg.lexicon_path);
    take(j, "scorer_url", cfg.scorer_url);
    take(j, "vocab_path", cfg.vocab_path);
    take(j, "table_path", cfg.table_path);
    take(j, "plan_path", cfg.plan_path);
    take(j, "sweep_path", cfg.sweep_path);
    take(j, "cache_dir", cfg.cache_dir);
    take(j, "output", cfg.output);
    take(j, "categories", cfg.categories);
    take(j, "strategy", cfg.strategy);
    take(j, "strategies", cfg.strategies);
    take(j, "gamma", cfg.gamma);
    take(j, "alpha", cfg.alpha);
    take(j, "alphas", cfg.alphas);
    take(j, "seeds", cfg.seeds);
    take(j, "score_seeds", cfg.score_seeds);
    take(j, "random_seed", cfg.random_seed);
    take(j, "val_ratio", cfg.val_ratio);
    take(j, "split_seed", cfg.split_seed);
    take(j, "max_new", cfg.max_new);
    take(j, "temperature", cfg.temperature);
    take(j, "window", cfg.window);
    take(j, "fd_epsilon", cfg.fd_epsilon);
    take(j, "concurrency_limit", cfg.concurrency_limit);
    take(j, "scope", cfg.scope);
    take(j, "top_ratio", cfg.top_ratio);
    take(j, "scorer_timeout_ms", cfg.scorer_timeout_ms);
    take(j, "scorer_retries", cfg.scorer_retries);
    take(j, "use_cache", cfg.use_cache);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config file: ") + e.what());
  }
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config file " + path.string() + ": " + e.what());
  }
  apply_json(base, j);
  return base;
}

}  // namespace fasp::cli

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fasp::cli {

/// Every knob a command may read. Precedence when assembling one:
/// command-line flags, then the JSON file given by --config, then these defaults.
/// The cache directory additionally honours $FASP_CACHE_DIR above the config file.
struct RunConfig {
  std::string model_path;
  std::string prompts_path;
  std::string corpus_path;
  std::string lexicon_path;
  std::string scorer_url;
  std::string vocab_path;  // word-level vocab; byte-level when empty
  std::string table_path;
  std::string plan_path;
  std::string sweep_path;
  std::string cache_dir = "cache";
  std::string output;

  std::vector<std::string> categories;
  std::string strategy = "fasp";
  std::vector<std::string> strategies;
  double gamma = 0.3;
  double alpha = 0.0;
  std::vector<double> alphas;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::uint64_t> score_seeds{1};
  std::uint64_t random_seed = 1;
  double val_ratio = 0.2;
  std::uint64_t split_seed = 0;
  int max_new = 20;
  double temperature = 1.0;
  int window = 128;
  double fd_epsilon = 1e-2;
  int concurrency_limit = 1;
  std::string scope = "all";
  double top_ratio = 0.2;
  int scorer_timeout_ms = 10000;
  int scorer_retries = 2;
  bool use_cache = true;

  /// Throws InvalidArgumentError on out-of-range values or conflicting scorer sources.
  void validate() const;

  /// Digest of the settings that influence results (paths and output locations excluded).
  std::string semantic_hash() const;
};

/// Overlays keys present in `j` onto `cfg`. Unknown keys are rejected.
void apply_json(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

}  // namespace fasp::cli

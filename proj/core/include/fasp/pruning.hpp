#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fasp/bias_eval.hpp"
#include "fasp/head_scoring.hpp"
#include "fasp/model.hpp"
#include "fasp/ranking.hpp"

namespace fasp {

enum class Strategy { kFasp, kMagnitude, kGradient, kRandom, kFairnessOnly, kPerformanceOnly };

std::string_view to_string(Strategy s) noexcept;
/// Accepts fasp, magnitude, gradient, random, fairness_only, performance_only.
Strategy parse_strategy(std::string_view name);
std::vector<Strategy> all_strategies();

struct PruneConfig {
  Strategy strategy = Strategy::kFasp;
  double gamma = 0.3;
  double alpha = 0.0;
  std::uint64_t seed = 1;
  double fd_epsilon = 1e-2;
};

/// Heads to gate off, highest priority first. Truncating `pruned` to a
/// prefix gives the plan for a smaller pruning ratio.
struct PruningPlan {
  Strategy strategy = Strategy::kFasp;
  double gamma = 0.0;
  double alpha = 0.0;
  std::vector<HeadId> pruned;
  std::vector<HeadId> protected_heads;  // FASP only; ascending flat index
};

nlohmann::json to_json(const PruningPlan& plan);
PruningPlan plan_from_json(const nlohmann::json& j, int heads_per_layer);
void save_plan(const PruningPlan& plan, const std::filesystem::path& path,
               const nlohmann::json& provenance = nullptr);
PruningPlan load_plan(const std::filesystem::path& path, int heads_per_layer);

/// Protect the floor(gamma*N) lowest-z_ppl heads, rank the rest by z_bias
/// descending, prune the first round(alpha*N). Ties go to the lower index.
PruningPlan plan_fasp(const HeadScoreTable& table, const std::string& category, double gamma,
                      double alpha);
PruningPlan plan_fairness_only(const HeadScoreTable& table, const std::string& category,
                               double alpha);
PruningPlan plan_performance_only(const HeadScoreTable& table, double alpha);

/// L2 norm of each head's Q/K/V columns and O rows, by flat index.
std::vector<double> magnitude_importance(const ModelConfig& cfg, const ModelWeights& w);
PruningPlan plan_magnitude(const ModelConfig& cfg, const ModelWeights& w, double alpha);

/// |L(g_h = 1+eps) - L(g_h = 1-eps)| / (2 eps) with L the mean NLL, by flat index.
std::vector<double> gradient_importance(const ModelConfig& cfg, const ModelWeights& w,
                                        std::span<const TokenId> corpus, int window,
                                        double fd_epsilon, int concurrency = 1);
PruningPlan plan_gradient(const ModelConfig& cfg, const ModelWeights& w,
                          std::span<const TokenId> corpus, int window, double alpha,
                          double fd_epsilon, int concurrency = 1);

/// Partial Fisher-Yates over flat indices driven by RngCursor(seed, 0).
PruningPlan plan_random(int n_heads, int heads_per_layer, double alpha, std::uint64_t seed);

/// Gates 1 everywhere except 0 on the first `prefix` (default: all) pruned heads.
HeadGateMask apply_plan(const PruningPlan& plan, int n_heads,
                        std::optional<std::size_t> prefix = std::nullopt);

/// Everything a plan of any strategy might need.
struct PlanInputs {
  const ModelConfig* cfg = nullptr;
  const ModelWeights* weights = nullptr;
  const HeadScoreTable* table = nullptr;
  std::string category;
  std::span<const TokenId> corpus;
  int window = 128;
  int concurrency = 1;
};

PruningPlan build_plan(const PruneConfig& config, const PlanInputs& inputs);

double percent_change(double base, double value);

struct SweepRow {
  Strategy strategy = Strategy::kFasp;
  double alpha = 0.0;
  std::string seed;  // decimal seed, or "pooled"
  double ppl = 0.0;
  double ppl_change_pct = 0.0;
  double bias = 0.0;
  double bias_change_pct = 0.0;
};

struct SweepRequest {
  PlanInputs plan_inputs;
  std::vector<Strategy> strategies;
  std::vector<double> alphas;
  double gamma = 0.3;
  std::uint64_t random_seed = 1;
  double fd_epsilon = 1e-2;
  const Vocab* vocab = nullptr;
  const PromptDataset* test = nullptr;
  const ToxicityScorer* scorer = nullptr;
  GenerationParams gen;
};

/// For each (strategy, alpha): plan, then perplexity and test-set bias, with
/// changes relative to the unpruned model. One row per seed plus one pooled row.
std::vector<SweepRow> sweep(const SweepRequest& request);

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);
std::vector<SweepRow> read_sweep_csv(std::istream& in);

}  // namespace fasp

#include "fasp/pruning.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "fasp/error.hpp"
#include "fasp/numerics.hpp"
#include "fasp/rng.hpp"
#include "parallel.hpp"

namespace fasp {
namespace {

constexpr std::string_view kStrategyNames[] = {"fasp",   "magnitude",     "gradient",
                                               "random", "fairness_only", "performance_only"};

// Takes the first `count` entries of `order` (flat indices) as the pruned list.
PruningPlan take_prefix(Strategy s, double gamma, double alpha, std::span<const std::size_t> order,
                        std::size_t count, int heads_per_layer) {
  PruningPlan plan;
  plan.strategy = s;
  plan.gamma = gamma;
  plan.alpha = alpha;
  plan.pruned.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    plan.pruned.push_back(HeadId::from_flat(static_cast<int>(order[i]), heads_per_layer));
  }
  return plan;
}

void write_provenance(nlohmann::json& j, const nlohmann::json& provenance) {
  if (!provenance.is_null()) j["provenance"] = provenance;
}

std::string fmt_number(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.10g}", v);
}

}  // namespace

std::string_view to_string(Strategy s) noexcept { return kStrategyNames[static_cast<int>(s)]; }

Strategy parse_strategy(std::string_view name) {
  for (int i = 0; i < 6; ++i) {
    if (kStrategyNames[i] == name) return static_cast<Strategy>(i);
  }
  throw InvalidArgumentError("unknown pruning strategy '" + std::string(name) + "'");
}

std::vector<Strategy> all_strategies() {
  return {Strategy::kFasp,   Strategy::kMagnitude,    Strategy::kGradient,
          Strategy::kRandom, Strategy::kFairnessOnly, Strategy::kPerformanceOnly};
}

nlohmann::json to_json(const PruningPlan& plan) {
  std::vector<int> pruned, prot;
  for (const auto& h : plan.pruned) pruned.push_back(h.flat_index);
  for (const auto& h : plan.protected_heads) prot.push_back(h.flat_index);
  return {{"strategy", to_string(plan.strategy)},
          {"gamma", plan.gamma},
          {"alpha", plan.alpha},
          {"head_index_base", 0},
          {"protected", prot},
          {"pruned", pruned}};
}

PruningPlan plan_from_json(const nlohmann::json& j, int heads_per_layer) {
  PruningPlan plan;
  try {
    plan.strategy = parse_strategy(j.at("strategy").get<std::string>());
    plan.gamma = j.at("gamma").get<double>();
    plan.alpha = j.at("alpha").get<double>();
    for (int i : j.at("pruned").get<std::vector<int>>()) {
      plan.pruned.push_back(HeadId::from_flat(i, heads_per_layer));
    }
    for (int i : j.at("protected").get<std::vector<int>>()) {
      plan.protected_heads.push_back(HeadId::from_flat(i, heads_per_layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed pruning plan: ") + e.what());
  }
  std::set<int> seen;
  for (const auto& h : plan.pruned) {
    if (!seen.insert(h.flat_index).second) throw PlanError("pruning plan lists a head twice");
  }
  for (const auto& h : plan.protected_heads) {
    if (seen.contains(h.flat_index)) throw PlanError("pruning plan prunes a protected head");
  }
  return plan;
}

void save_plan(const PruningPlan& plan, const std::filesystem::path& path,
               const nlohmann::json& provenance) {
  auto j = to_json(plan);
  write_provenance(j, provenance);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write plan " + path.string());
  out << j.dump(2) << "\n";
}

PruningPlan load_plan(const std::filesystem::path& path, int heads_per_layer) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open plan " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("plan " + path.string() + ": " + e.what());
  }
  return plan_from_json(j, heads_per_layer);
}

PruningPlan plan_fasp(const HeadScoreTable& table, const std::string& category, double gamma,
                      double alpha) {
  const auto n = static_cast<std::size_t>(table.n_heads());
  const std::size_t n_protected = protected_count(gamma, n);
  const std::size_t n_pruned = prune_count(alpha, n);
  if (alpha > 1.0 - gamma + 1e-12 || n_pruned > n - n_protected) {
    throw PlanError(fmt::format(
        "alpha {} is too large for gamma {}: FASP can prune at most {} of {} heads "
        "(alpha <= 1 - gamma)",
        alpha, gamma, n - n_protected, n));
  }
  const auto z_ppl = table.z_ppl_vector();
  const auto prot = select_protected(z_ppl, gamma);
  const std::set<int> prot_set(prot.begin(), prot.end());

  std::vector<std::size_t> candidates;
  std::vector<double> z_bias;
  for (const auto& s : table.scores) {
    if (prot_set.contains(s.head.flat_index)) continue;
    auto it = s.z_bias.find(category);
    if (it == s.z_bias.end()) {
      throw MissingScoreError("z_bias(" + category + ") missing for non-protected head " +
                              std::to_string(s.head.flat_index));
    }
    candidates.push_back(static_cast<std::size_t>(s.head.flat_index));
    z_bias.push_back(it->second);
  }
  // Candidates are in ascending flat order, so stable ranking keeps the tie rule.
  std::vector<std::size_t> order;
  for (std::size_t i : argsort(z_bias, SortOrder::kDescending)) order.push_back(candidates[i]);

  PruningPlan plan = take_prefix(Strategy::kFasp, gamma, alpha, order, n_pruned, table.n_heads_per_layer);
  for (int i : std::set<int>(prot.begin(), prot.end())) {
    plan.protected_heads.push_back(HeadId::from_flat(i, table.n_heads_per_layer));
  }
  return plan;
}

PruningPlan plan_fairness_only(const HeadScoreTable& table, const std::string& category,
                               double alpha) {
  const auto n = static_cast<std::size_t>(table.n_heads());
  const std::size_t k = prune_count(alpha, n);
  const auto order = argsort(table.z_bias_vector(category), SortOrder::kDescending);
  return take_prefix(Strategy::kFairnessOnly, 0.0, alpha, order, k, table.n_heads_per_layer);
}

PruningPlan plan_performance_only(const HeadScoreTable& table, double alpha) {
  const auto n = static_cast<std::size_t>(table.n_heads());
  const std::size_t k = prune_count(alpha, n);
  const auto order = argsort(table.z_ppl_vector(), SortOrder::kDescending);
  return take_prefix(Strategy::kPerformanceOnly, 0.0, alpha, order, k, table.n_heads_per_layer);
}

std::vector<double> magnitude_importance(const ModelConfig& cfg, const ModelWeights& w) {
  w.validate(cfg);
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto dh = static_cast<std::size_t>(cfg.d_head);
  std::vector<double> norms;
  norms.reserve(static_cast<std::size_t>(cfg.n_heads()));
  for (const auto& layer : w.layers) {
    for (int h = 0; h < cfg.n_heads_per_layer; ++h) {
      const std::size_t lo = static_cast<std::size_t>(h) * dh;
      double sq = 0.0;
      for (const TensorF32* m : {&layer.w_q, &layer.w_k, &layer.w_v}) {
        for (std::size_t r = 0; r < d; ++r) {
          for (std::size_t c = lo; c < lo + dh; ++c) {
            const double v = m->at(r, c);
            sq += v * v;
          }
        }
      }
      for (std::size_t r = lo; r < lo + dh; ++r) {
        for (float v : layer.w_o.row(r)) sq += static_cast<double>(v) * v;
      }
      norms.push_back(std::sqrt(sq));
    }
  }
  return norms;
}

PruningPlan plan_magnitude(const ModelConfig& cfg, const ModelWeights& w, double alpha) {
  const auto norms = magnitude_importance(cfg, w);
  const auto order = argsort(norms, SortOrder::kAscending);
  return take_prefix(Strategy::kMagnitude, 0.0, alpha, order, prune_count(alpha, norms.size()),
                     cfg.n_heads_per_layer);
}

std::vector<double> gradient_importance(const ModelConfig& cfg, const ModelWeights& w,
                                        std::span<const TokenId> corpus, int window,
                                        double fd_epsilon, int concurrency) {
  if (!(fd_epsilon > 0.0 && fd_epsilon <= 1.0)) {
    throw InvalidArgumentError("fd_epsilon must lie in (0, 1]");
  }
  const int n = cfg.n_heads();
  const auto eps = static_cast<float>(fd_epsilon);
  std::vector<double> importance(static_cast<std::size_t>(n));
  detail::parallel_for(importance.size(), concurrency, [&](std::size_t h) {
    auto plus = HeadGateMask::all_present(n);
    auto minus = plus;
    plus.set(h, 1.0f + eps);
    minus.set(h, 1.0f - eps);
    const double up = perplexity(cfg, w, plus, corpus, window).mean_nll;
    const double down = perplexity(cfg, w, minus, corpus, window).mean_nll;
    // Divide by the gate spread actually realized in float.
    const double spread = static_cast<double>(1.0f + eps) - static_cast<double>(1.0f - eps);
    importance[h] = std::abs((up - down) / spread);
  });
  return importance;
}

PruningPlan plan_gradient(const ModelConfig& cfg, const ModelWeights& w,
                          std::span<const TokenId> corpus, int window, double alpha,
                          double fd_epsilon, int concurrency) {
  const auto importance = gradient_importance(cfg, w, corpus, window, fd_epsilon, concurrency);
  const auto order = argsort(importance, SortOrder::kAscending);
  return take_prefix(Strategy::kGradient, 0.0, alpha, order,
                     prune_count(alpha, importance.size()), cfg.n_heads_per_layer);
}

PruningPlan plan_random(int n_heads, int heads_per_layer, double alpha, std::uint64_t seed) {
  if (n_heads < 1) throw InvalidArgumentError("plan_random: need at least one head");
  const auto n = static_cast<std::size_t>(n_heads);
  const std::size_t k = prune_count(alpha, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RngCursor rng(seed, 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(order[i], order[j]);
  }
  return take_prefix(Strategy::kRandom, 0.0, alpha, order, k, heads_per_layer);
}

HeadGateMask apply_plan(const PruningPlan& plan, int n_heads, std::optional<std::size_t> prefix) {
  auto mask = HeadGateMask::all_present(n_heads);
  const std::size_t k = std::min(prefix.value_or(plan.pruned.size()), plan.pruned.size());
  for (std::size_t i = 0; i < k; ++i) {
    const int flat = plan.pruned[i].flat_index;
    if (flat < 0 || flat >= n_heads) throw OutOfRangeError("plan names a head outside the model");
    mask.set(static_cast<std::size_t>(flat), 0.0f);
  }
  return mask;
}

PruningPlan build_plan(const PruneConfig& config, const PlanInputs& in) {
  const auto need_table = [&]() -> const HeadScoreTable& {
    if (!in.table) throw InvalidArgumentError(std::string(to_string(config.strategy)) + " needs a score table");
    return *in.table;
  };
  const auto need_model = [&]() {
    if (!in.cfg || !in.weights) {
      throw InvalidArgumentError(std::string(to_string(config.strategy)) + " needs model weights");
    }
  };
  switch (config.strategy) {
    case Strategy::kFasp:
      return plan_fasp(need_table(), in.category, config.gamma, config.alpha);
    case Strategy::kFairnessOnly:
      return plan_fairness_only(need_table(), in.category, config.alpha);
    case Strategy::kPerformanceOnly:
      return plan_performance_only(need_table(), config.alpha);
    case Strategy::kMagnitude:
      need_model();
      return plan_magnitude(*in.cfg, *in.weights, config.alpha);
    case Strategy::kGradient:
      need_model();
      return plan_gradient(*in.cfg, *in.weights, in.corpus, in.window, config.alpha,
                           config.fd_epsilon, in.concurrency);
    case Strategy::kRandom: {
      const int n = in.cfg ? in.cfg->n_heads() : need_table().n_heads();
      const int hpl = in.cfg ? in.cfg->n_heads_per_layer : need_table().n_heads_per_layer;
      return plan_random(n, hpl, config.alpha, config.seed);
    }
  }
  throw InvalidArgumentError("unknown strategy");
}

double percent_change(double base, double value) {
  if (base == 0.0) return value == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  return 100.0 * (value - base) / base;
}

std::vector<SweepRow> sweep(const SweepRequest& req) {
  const PlanInputs& in = req.plan_inputs;
  if (!in.cfg || !in.weights || !req.vocab || !req.test || !req.scorer) {
    throw InvalidArgumentError("sweep needs a model, a vocab, a test set and a scorer");
  }
  const ModelConfig& cfg = *in.cfg;
  const ModelWeights& w = *in.weights;
  const int n = cfg.n_heads();

  const auto evaluate = [&](const HeadGateMask& mask) {
    const double ppl = perplexity(cfg, w, mask, in.corpus, in.window).ppl;
    auto bias = evaluate_model_bias(cfg, w, mask, *req.vocab, *req.test, in.category, *req.scorer, req.gen);
    return std::pair{ppl, std::move(bias)};
  };
  const auto base = evaluate(HeadGateMask::all_present(n));

  struct Cell {
    Strategy strategy;
    double alpha;
  };
  std::vector<Cell> cells;
  for (Strategy s : req.strategies) {
    for (double a : req.alphas) cells.push_back({s, a});
  }
  // Plans first (gradient plans parallelize internally), then evaluations.
  std::vector<PruningPlan> plans;
  plans.reserve(cells.size());
  for (const auto& c : cells) {
    PruneConfig pc{c.strategy, req.gamma, c.alpha, req.random_seed, req.fd_epsilon};
    plans.push_back(build_plan(pc, in));
  }
  std::vector<std::vector<SweepRow>> rows(cells.size());
  detail::parallel_for(cells.size(), in.concurrency, [&](std::size_t i) {
    const auto [ppl, bias] = evaluate(apply_plan(plans[i], n));
    const double ppl_pct = percent_change(base.first, ppl);
    for (const auto& [seed, report] : bias.per_seed) {
      rows[i].push_back({cells[i].strategy, cells[i].alpha, std::to_string(seed), ppl, ppl_pct,
                         report.bias, percent_change(base.second.per_seed.at(seed).bias, report.bias)});
    }
    rows[i].push_back({cells[i].strategy, cells[i].alpha, "pooled", ppl, ppl_pct, bias.pooled.bias,
                       percent_change(base.second.pooled.bias, bias.pooled.bias)});
  });
  std::vector<SweepRow> out;
  for (auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "strategy,alpha,seed,ppl,ppl_change_pct,bias,bias_change_pct\n";
  for (const auto& r : rows) {
    out << to_string(r.strategy) << ',' << fmt_number(r.alpha) << ',' << r.seed << ','
        << fmt_number(r.ppl) << ',' << fmt_number(r.ppl_change_pct) << ',' << fmt_number(r.bias)
        << ',' << fmt_number(r.bias_change_pct) << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  std::vector<SweepRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != "strategy,alpha,seed,ppl,ppl_change_pct,bias,bias_change_pct") {
        throw ParseError(line_no, "unexpected sweep CSV header");
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ParseError(line_no, "expected 7 fields");
    const auto num = [&](const std::string& s) {
      if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
      try {
        return std::stod(s);
      } catch (const std::exception&) {
        throw ParseError(line_no, "bad number '" + s + "'");
      }
    };
    rows.push_back({parse_strategy(f[0]), num(f[1]), f[2], num(f[3]), num(f[4]), num(f[5]), num(f[6])});
  }
  if (!header_seen) throw ParseError(line_no, "missing sweep CSV header");
  return rows;
}

}  // namespace fasp

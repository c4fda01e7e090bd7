// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cli/cli.hpp"
#include "fasp/analysis.hpp"
#include "fasp/bias_eval.hpp"
#include "fasp/head_scoring.hpp"
#include "fasp/model.hpp"
#include "fasp/pruning.hpp"
#include "fasp/rng.hpp"
#include "fasp/scorer.hpp"
#include "fasp/tokenizer.hpp"
#include "fasp/weights_io.hpp"
#include "synthetic.hpp"
#include "toy.hpp"

namespace fasp {
namespace {

namespace t = fasp::testing;

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool rel_close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

// 1. Worked bias example.
Outcome bias_worked_example() {
  const auto r = bias_metric({{"trans", {ToxicityScore(0.6)}}, {"gay", {ToxicityScore(0.8)}}});
  const bool ok = std::abs(r.grand_mean - 0.7) <= 1e-12 && std::abs(r.bias - 0.2) <= 1e-12;
  return {ok, fmt::format("grand_mean={:.17g} bias={:.17g}", r.grand_mean, r.bias)};
}

// 2. baseline - z_ppl(h) equals an independent ablated perplexity.
Outcome ppl_bookkeeping() {
  const auto cfg = t::toy_config();
  const auto w = make_toy_model(cfg, 1);
  const auto corpus = t::random_tokens(512, 7);
  const auto scores = score_ppl_all(cfg, w, corpus, 128);
  double worst = 0.0;
  for (int h = 0; h < cfg.n_heads(); ++h) {
    auto mask = HeadGateMask::all_present(cfg.n_heads());
    mask.set(static_cast<std::size_t>(h), 0.0f);
    const double ablated = perplexity(cfg, w, mask, corpus, 128).ppl;
    const double implied = scores.baseline_ppl - scores.z_ppl[static_cast<std::size_t>(h)];
    worst = std::max(worst, std::abs(implied - ablated) / ablated);
  }
  return {worst <= 1e-6, fmt::format("max relative error {:.3g} over {} heads", worst, cfg.n_heads())};
}

// 3. plan_fasp against a brute-force re-derivation on random tables.
Outcome fasp_oracle() {
  RngCursor rng(2024, 0);
  int mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int layers = 1 + static_cast<int>(rng.below(6));
    const int hpl = 8 + static_cast<int>(rng.below(5));
    const int n_layers = std::max(1, std::min(layers, 72 / hpl));
    const auto table = t::synthetic_table(n_layers, hpl, 1000 + static_cast<std::uint64_t>(trial));
    const double gamma = std::floor(rng.uniform() * 80.0) / 100.0;
    const double alpha = rng.uniform() * (1.0 - gamma);
    const auto plan = plan_fasp(table, "cat", gamma, alpha);
    const auto [prot, pruned] = t::brute_force_fasp(table, "cat", gamma, alpha);
    if (t::flat(plan.protected_heads) != prot || t::flat(plan.pruned) != pruned) ++mismatches;
  }
  return {mismatches == 0, fmt::format("{} of 50 tables differ", mismatches)};
}

// 4. gamma = 0 reduces to fairness-only; protected heads are never pruned.
Outcome degenerate_gamma() {
  int failures = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto table = t::synthetic_table(6, 12, seed);
    for (int i = 1; i <= 10; ++i) {
      const double alpha = 0.05 * i;
      if (t::flat(plan_fasp(table, "cat", 0.0, alpha).pruned) !=
          t::flat(plan_fairness_only(table, "cat", alpha).pruned)) {
        ++failures;
      }
    }
    for (int g = 2; g <= 7; ++g) {
      const double gamma = 0.1 * g;
      for (int a = 0; a <= 20; ++a) {
        const double alpha = (1.0 - gamma) * a / 20.0;
        const auto plan = plan_fasp(table, "cat", gamma, alpha);
        for (const auto& p : plan.pruned) {
          for (const auto& q : plan.protected_heads) failures += p == q ? 1 : 0;
        }
      }
    }
  }
  return {failures == 0, fmt::format("{} violations", failures)};
}

// 5. A head with no parameters is neutral under every score.
Outcome zero_head_neutrality() {
  const auto cfg = t::toy_config();
  auto w = make_toy_model(cfg, 1);
  constexpr int kHead = 6;
  t::zero_head(cfg, w, kHead);
  const auto corpus = t::random_tokens(512, 7);
  const auto vocab = Vocab::byte_level();
  const auto data = split(load_prompts(t::fixture("prompts.jsonl")), 0.2, 0);
  const auto scorer = LexiconScorer::load(t::fixture("lexicon.tsv"));

  ScoreHeadsRequest req;
  req.corpus = corpus;
  req.window = 128;
  req.vocab = &vocab;
  req.validation = &data.validation;
  req.categories = data.validation.categories();
  req.scorer = &scorer;
  req.gen.max_new = 6;
  req.gen.seeds = {1, 2};
  const auto table = score_heads(cfg, w, req);
  const auto& s = table.scores[kHead];
  bool ok = *s.z_ppl == 0.0;
  for (const auto& c : req.categories) ok = ok && s.z_bias.at(c) == 0.0;

  const auto mag = magnitude_importance(cfg, w);
  const auto order = argsort(mag, SortOrder::kAscending);
  ok = ok && order.front() == kHead;
  const auto grad = gradient_importance(cfg, w, corpus, 128, 1e-2);
  ok = ok && grad[kHead] < 1e-9;
  return {ok, fmt::format("z_ppl={} categories={} magnitude_rank={} gradient={:.3g}", *s.z_ppl,
                          req.categories.size(), std::find(order.begin(), order.end(), kHead) - order.begin(),
                          grad[kHead])};
}

// 6. Zero model perplexity and causality.
Outcome perplexity_sanity() {
  const auto cfg = t::toy_config();
  const auto ones = HeadGateMask::all_present(cfg.n_heads());
  const double ppl = perplexity(cfg, ModelWeights::zeros(cfg), ones, t::random_tokens(512, 3), 128).ppl;
  bool ok = rel_close(ppl, cfg.vocab_size, 1e-3);

  RngCursor rng(66, 0);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto w = make_toy_model(cfg, 300 + static_cast<std::uint64_t>(trial));
    auto tokens = t::random_tokens(24, 400 + static_cast<std::uint64_t>(trial));
    const auto pos = rng.below(tokens.size() - 1);
    const auto base = forward_logits(cfg, w, ones, tokens);
    for (auto i = pos + 1; i < tokens.size(); ++i) tokens[i] = static_cast<TokenId>(rng.below(259));
    const auto pert = forward_logits(cfg, w, ones, tokens);
    for (std::size_t p = 0; p <= pos; ++p) {
      for (std::size_t k = 0; k < base.cols(); ++k) violations += base.at(p, k) != pert.at(p, k) ? 1 : 0;
    }
  }
  ok = ok && violations == 0;
  return {ok, fmt::format("zero-model ppl={:.6f} causality violations={}", ppl, violations)};
}

// 7. The CLI pipeline is byte-reproducible and a warm rerun evaluates nothing.
struct PipelineRun {
  bool ok = true;
  std::string log;
  cli::RunSummary last_scoring;
};

std::vector<std::string> score_args(const std::string& dir) {
  return {"score-heads", "--model", t::fixture("toy_model.fasp").string(), "--prompts",
          t::fixture("prompts.jsonl").string(), "--corpus", t::fixture("corpus.txt").string(),
          "--lexicon", t::fixture("lexicon.tsv").string(), "--category", "gender_and_sex",
          "--max-new", "4", "--cache-dir", dir + "/cache", "-o", dir + "/head_scores.json"};
}

PipelineRun run_pipeline(const std::string& dir) {
  const std::string model = t::fixture("toy_model.fasp").string();
  const std::string prompts = t::fixture("prompts.jsonl").string();
  const std::string corpus = t::fixture("corpus.txt").string();
  const std::string lexicon = t::fixture("lexicon.tsv").string();
  const std::vector<std::vector<std::string>> steps = {
      score_args(dir),
      {"prune", "--table", dir + "/head_scores.json", "--strategy", "fasp", "--gamma", "0.3", "--alpha",
       "0.25", "-o", dir + "/plan.json"},
      {"eval-bias", "--model", model, "--prompts", prompts, "--lexicon", lexicon, "--category",
       "gender_and_sex", "--max-new", "4", "--seeds", "1", "2", "--plan", dir + "/plan.json", "-o",
       dir + "/eval_bias.json"},
      {"eval-ppl", "--model", model, "--corpus", corpus, "--plan", dir + "/plan.json", "-o",
       dir + "/eval_ppl.json"},
      {"sweep", "--model", model, "--prompts", prompts, "--corpus", corpus, "--lexicon", lexicon,
       "--category", "gender_and_sex", "--table", dir + "/head_scores.json", "--alphas", "0", "0.25",
       "--seeds", "1", "--max-new", "4", "-o", dir + "/sweep.csv"},
      {"report", "--sweep", dir + "/sweep.csv", "--table", dir + "/head_scores.json", "-o",
       dir + "/report"},
  };
  PipelineRun run;
  for (const auto& args : steps) {
    std::ostringstream out, err;
    const auto summary = cli::run(args, out, err);
    if (args.front() == "score-heads") run.last_scoring = summary;
    if (summary.exit_code != 0) {
      run.ok = false;
      run.log += args.front() + ": " + err.str();
    }
  }
  return run;
}

Outcome pipeline_determinism() {
  t::TempDir a, b;
  const auto ra = run_pipeline(a.path().string());
  const auto rb = run_pipeline(b.path().string());
  if (!ra.ok || !rb.ok) return {false, "pipeline failed: " + ra.log + rb.log};

  const std::vector<std::string> artifacts = {
      "head_scores.json", "plan.json", "eval_bias.json", "eval_ppl.json", "sweep.csv",
      "report/sweep_summary.csv", "report/correlation.csv", "report/overlap.json", "report/summary.md"};
  std::vector<std::string> differing;
  for (const auto& f : artifacts) {
    if (t::read_file(a / f) != t::read_file(b / f)) differing.push_back(f);
  }

  std::ostringstream out, err;
  const auto warm = cli::run(score_args(a.path().string()), out, err);
  const bool warm_ok = warm.exit_code == 0 && warm.ppl_evaluations == 0 && warm.bias_evaluations == 0;
  const bool same_after_warm = t::read_file(a / "head_scores.json") == t::read_file(b / "head_scores.json");
  return {differing.empty() && warm_ok && same_after_warm,
          fmt::format("{} artifacts compared, {} differ; cold evaluations {}+{}, warm evaluations {}+{} "
                      "({} cache hits)",
                      artifacts.size(), differing.size(), ra.last_scoring.ppl_evaluations,
                      ra.last_scoring.bias_evaluations, warm.ppl_evaluations, warm.bias_evaluations,
                      warm.cache_hits)};
}

// 8. Planted correlation recovery and matrix shape.
Outcome correlation_machinery() {
  constexpr double rho = 0.8;
  constexpr int kHeads = 72;
  double abs_err = 0.0;
  bool shape_ok = true;
  for (int rep = 0; rep < 20; ++rep) {
    RngCursor rng(800 + static_cast<std::uint64_t>(rep), 0);
    HeadScoreTable table;
    table.n_layers = 6;
    table.n_heads_per_layer = 12;
    for (int i = 0; i < kHeads; ++i) {
      const double x = rng.normal();
      const double e = rng.normal();
      const double f = rng.normal();
      HeadScore s;
      s.head = HeadId::from_flat(i, 12);
      s.z_bias = {{"x", x}, {"y", rho * x + std::sqrt(1 - rho * rho) * e}, {"z", f}};
      table.scores.push_back(s);
    }
    const auto m = correlate(table, {"x", "y", "z"});
    abs_err += std::abs(*m.at(0, 1) - rho);
    for (std::size_t i = 0; i < 3; ++i) {
      shape_ok = shape_ok && m.at(i, i) == 1.0;
      for (std::size_t j = 0; j < 3; ++j) shape_ok = shape_ok && m.at(i, j) == m.at(j, i);
    }
  }
  const double mae = abs_err / 20.0;
  return {mae <= 0.1 && shape_ok, fmt::format("mean |r - 0.8| = {:.4f}, symmetric unit diagonal: {}", mae,
                                              shape_ok ? "yes" : "no")};
}

// 9. A planted biased head is found by both fairness-aware strategies.
Outcome planted_head() {
  const auto p = t::make_planted_model();
  const auto vocab = Vocab::byte_level();
  const int n = p.cfg.n_heads();
  const auto ones = HeadGateMask::all_present(n);

  const auto conts = generate_continuations(p.cfg, p.weights, ones, vocab, p.validation,
                                            t::PlantedModel::kCategory, p.gen);
  std::string outputs;
  for (const auto& c : conts) outputs += c.text;

  ScoreHeadsRequest req;
  req.corpus = p.corpus;
  req.vocab = &vocab;
  req.validation = &p.validation;
  req.categories = {t::PlantedModel::kCategory};
  req.scorer = &p.scorer;
  req.gen = p.gen;
  auto table = score_heads(p.cfg, p.weights, req);

  const double alpha = 1.0 / n;
  const auto fairness = t::flat(plan_fairness_only(table, t::PlantedModel::kCategory, alpha).pruned);
  const auto fasp = t::flat(plan_fasp(table, t::PlantedModel::kCategory, 0.3, alpha).pruned);
  const std::vector<int> expected{t::PlantedModel::kPlantedHead};

  const auto before = evaluate_model_bias(p.cfg, p.weights, ones, vocab, p.validation,
                                          t::PlantedModel::kCategory, p.scorer, p.gen);
  auto mask = ones;
  mask.set(t::PlantedModel::kPlantedHead, 0.0f);
  const auto after = evaluate_model_bias(p.cfg, p.weights, mask, vocab, p.validation,
                                         t::PlantedModel::kCategory, p.scorer, p.gen);
  const bool ok = fairness == expected && fasp == expected && after.pooled.bias < before.pooled.bias;
  return {ok, fmt::format("greedy outputs '{}', z_bias={:.3f}, fairness_only={}, fasp={}, bias {:.3f} -> {:.3f}",
                          outputs, table.scores[t::PlantedModel::kPlantedHead].z_bias.at(t::PlantedModel::kCategory),
                          fairness.empty() ? -1 : fairness.front(), fasp.empty() ? -1 : fasp.front(),
                          before.pooled.bias, after.pooled.bias)};
}

// 10. Lexicon scorer monotonicity and product formula.
Outcome lexicon_scorer() {
  const auto scorer = LexiconScorer::load(t::fixture("lexicon.tsv"));
  const std::vector<std::string> words = {"the", "stupid", "cat", "fat", "idiot", "x", "q",
                                          "hate", "sun", "ugly", "a", "road"};
  // Weights read straight from the file, independent of the scorer's parser.
  std::map<std::string, double> weights;
  {
    std::istringstream in(t::read_file(t::fixture("lexicon.tsv")));
    std::string word;
    double weight = 0.0;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream fields(line);
      fields >> word >> weight;
      weights[word] = weight;
    }
  }
  RngCursor rng(10, 0);
  std::string text;
  double keep = 1.0;
  double prev = 0.0;
  int monotone_violations = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto& w = words[rng.below(words.size())];
    text += (text.empty() ? "" : " ") + w;
    if (auto it = weights.find(w); it != weights.end()) keep *= 1.0 - it->second;
    const double s = scorer.score_one(text);
    monotone_violations += s < prev ? 1 : 0;
    worst = std::max(worst, std::abs(s - (1.0 - keep)));
    prev = s;
  }
  return {monotone_violations == 0 && worst <= 1e-9,
          fmt::format("{} monotonicity violations, max oracle error {:.3g}", monotone_violations, worst)};
}

}  // namespace
}  // namespace fasp

int main() {
  using Check = std::pair<const char*, std::function<fasp::Outcome()>>;
  const std::vector<Check> checks = {
      {"bias metric worked example", fasp::bias_worked_example},
      {"perplexity score bookkeeping", fasp::ppl_bookkeeping},
      {"FASP brute-force oracle", fasp::fasp_oracle},
      {"degenerate gamma and protection", fasp::degenerate_gamma},
      {"zero-head neutrality", fasp::zero_head_neutrality},
      {"perplexity sanity and causality", fasp::perplexity_sanity},
      {"pipeline determinism and warm cache", fasp::pipeline_determinism},
      {"correlation machinery", fasp::correlation_machinery},
      {"planted biased head", fasp::planted_head},
      {"lexicon scorer", fasp::lexicon_scorer},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    fasp::Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += o.pass ? 0 : 1;
    std::cout << fmt::format("{} [{}] {}: {} ({:.2f}s)\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first,
                             o.detail, secs);
  }
  std::cout << fmt::format("{}/{} criteria passed\n", checks.size() - static_cast<std::size_t>(failed),
                           checks.size());
  return failed == 0 ? 0 : 1;
}

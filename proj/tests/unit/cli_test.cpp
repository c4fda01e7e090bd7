#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli/cli.hpp"
#include "fasp/head_scoring.hpp"
#include "fasp/pruning.hpp"
#include "synthetic.hpp"
#include "toy.hpp"

namespace fasp {
namespace {

using cli::RunSummary;

struct Invocation {
  RunSummary summary;
  std::string out;
  std::string err;
};

Invocation invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Invocation inv;
  inv.summary = cli::run(args, out, err);
  inv.out = out.str();
  inv.err = err.str();
  return inv;
}

nlohmann::json read_json(const std::string& path) {
  return nlohmann::json::parse(testing::read_file(path));
}

std::vector<std::string> scoring_args(const testing::TempDir& dir) {
  return {"score-heads",
          "--model", testing::fixture("toy_model.fasp").string(),
          "--prompts", testing::fixture("prompts.jsonl").string(),
          "--corpus", testing::fixture("corpus.txt").string(),
          "--lexicon", testing::fixture("lexicon.tsv").string(),
          "--category", "gender_and_sex",
          "--max-new", "4",
          "-o", dir / "head_scores.json"};
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
  ~ScopedEnv() { ::unsetenv(name_); }
  ScopedEnv(const ScopedEnv&) = delete;
  ScopedEnv& operator=(const ScopedEnv&) = delete;

 private:
  const char* name_;
};

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(invoke({"--help"}).summary.exit_code, cli::kSuccess);
  EXPECT_EQ(invoke({"prune", "--help"}).summary.exit_code, cli::kSuccess);
  EXPECT_EQ(invoke({}).summary.exit_code, cli::kUsageError);
  EXPECT_EQ(invoke({"prune", "--no-such-flag"}).summary.exit_code, cli::kUsageError);
  EXPECT_EQ(invoke({"frobnicate"}).summary.exit_code, cli::kUsageError);
}

TEST(Cli, MissingInputFileNamesThePath) {
  testing::TempDir dir;
  auto args = scoring_args(dir);
  args[4] = dir / "absent.jsonl";
  const auto inv = invoke(args);
  EXPECT_EQ(inv.summary.exit_code, cli::kUsageError);
  EXPECT_NE(inv.err.find("--prompts"), std::string::npos);
  EXPECT_NE(inv.err.find(dir / "absent.jsonl"), std::string::npos);
}

TEST(Cli, PruneCountsAndInfeasibleRatios) {
  testing::TempDir dir;
  save_table(testing::synthetic_table(6, 12, 3), dir / "t.json");
  const auto ok = invoke({"prune", "--table", dir / "t.json", "--strategy", "fasp", "--gamma", "0.3",
                          "--alpha", "0.1", "--category", "cat", "-o", dir / "plan.json"});
  ASSERT_EQ(ok.summary.exit_code, cli::kSuccess) << ok.err;
  const auto plan = read_json(dir / "plan.json");
  EXPECT_EQ(plan.at("pruned").size(), 7u);
  EXPECT_EQ(plan.at("protected").size(), 21u);
  EXPECT_TRUE(plan.at("provenance").contains("config_hash"));

  const auto bad = invoke({"prune", "--table", dir / "t.json", "--strategy", "fasp", "--gamma", "0.3",
                           "--alpha", "0.8", "--category", "cat", "-o", dir / "bad.json"});
  EXPECT_EQ(bad.summary.exit_code, cli::kUsageError);
  EXPECT_FALSE(std::filesystem::exists(dir / "bad.json"));
  EXPECT_FALSE(bad.err.empty());

  EXPECT_EQ(invoke({"prune", "--table", dir / "t.json", "--alpha", "1.5"}).summary.exit_code,
            cli::kUsageError);
}

TEST(Cli, ConfigPrecedence) {
  testing::TempDir dir;
  save_table(testing::synthetic_table(6, 12, 3), dir / "t.json");
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << nlohmann::json{{"gamma", 0.5}, {"alpha", 0.25}, {"categories", {"cat"}},
                          {"table_path", dir / "t.json"}}.dump();
  }
  ASSERT_EQ(invoke({"prune", "--config", dir / "cfg.json", "-o", dir / "a.json"}).summary.exit_code, 0);
  auto plan = read_json(dir / "a.json");
  EXPECT_DOUBLE_EQ(plan.at("gamma"), 0.5);
  EXPECT_DOUBLE_EQ(plan.at("alpha"), 0.25);
  EXPECT_EQ(plan.at("protected").size(), 36u);

  ASSERT_EQ(invoke({"prune", "--config", dir / "cfg.json", "--alpha", "0.1", "-o", dir / "b.json"})
                .summary.exit_code,
            0);
  plan = read_json(dir / "b.json");
  EXPECT_DOUBLE_EQ(plan.at("gamma"), 0.5);
  EXPECT_DOUBLE_EQ(plan.at("alpha"), 0.1);

  ASSERT_EQ(invoke({"prune", "--table", dir / "t.json", "--category", "cat", "-o", dir / "c.json"})
                .summary.exit_code,
            0);
  EXPECT_DOUBLE_EQ(read_json(dir / "c.json").at("gamma"), 0.3);

  {
    std::ofstream cfg(dir / "unknown.json");
    cfg << R"({"gama": 0.1})";
  }
  EXPECT_EQ(invoke({"prune", "--config", dir / "unknown.json"}).summary.exit_code, cli::kUsageError);
}

TEST(Cli, CacheDirectoryPrecedenceAndWarmRerun) {
  testing::TempDir dir;
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << nlohmann::json{{"cache_dir", dir / "from_config"}}.dump();
  }
  auto args = scoring_args(dir);
  args.insert(args.end(), {"--config", dir / "cfg.json"});
  {
    ScopedEnv env("FASP_CACHE_DIR", dir / "from_env");
    const auto cold = invoke(args);
    ASSERT_EQ(cold.summary.exit_code, 0) << cold.err;
    EXPECT_EQ(cold.summary.ppl_evaluations, 9);
    EXPECT_EQ(cold.summary.bias_evaluations, 9);
    EXPECT_TRUE(std::filesystem::exists(dir / "from_env"));
    EXPECT_FALSE(std::filesystem::exists(dir / "from_config"));
    const auto first = testing::read_file(dir / "head_scores.json");

    const auto warm = invoke(args);
    ASSERT_EQ(warm.summary.exit_code, 0) << warm.err;
    EXPECT_EQ(warm.summary.ppl_evaluations, 0);
    EXPECT_EQ(warm.summary.bias_evaluations, 0);
    EXPECT_EQ(warm.summary.cache_hits, 18);
    EXPECT_EQ(testing::read_file(dir / "head_scores.json"), first);

    auto flagged = args;
    flagged.insert(flagged.end(), {"--cache-dir", dir / "from_flag"});
    ASSERT_EQ(invoke(flagged).summary.exit_code, 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "from_flag"));
  }
  auto no_cache = scoring_args(dir);
  no_cache.insert(no_cache.end(), {"--no-cache", "--cache-dir", dir / "never"});
  // --no-cache must win even when a directory is configured.
  const auto inv = invoke(no_cache);
  ASSERT_EQ(inv.summary.exit_code, 0);
  EXPECT_EQ(inv.summary.ppl_evaluations, 9);
  EXPECT_FALSE(std::filesystem::exists(dir / "never"));
}

TEST(Cli, NonCriticalScopeScoresTheRemainder) {
  testing::TempDir dir;
  auto args = scoring_args(dir);
  args.insert(args.end(), {"--scope", "non-critical", "--gamma", "0.3", "--no-cache"});
  const auto inv = invoke(args);
  ASSERT_EQ(inv.summary.exit_code, 0) << inv.err;
  // 8 heads, floor(0.3 * 8) = 2 protected, so 6 bias evaluations plus the baseline.
  EXPECT_EQ(inv.summary.bias_evaluations, 7);
  const auto table = load_table(dir / "head_scores.json");
  int scored = 0;
  for (const auto& s : table.scores) scored += s.z_bias.count("gender_and_sex") ? 1 : 0;
  EXPECT_EQ(scored, 6);
}

TEST(Cli, EmptyPlanLeavesMetricsUnchanged) {
  testing::TempDir dir;
  auto scoring = scoring_args(dir);
  scoring.insert(scoring.end(), {"--cache-dir", dir / "cache"});
  ASSERT_EQ(invoke(scoring).summary.exit_code, 0);
  ASSERT_EQ(invoke({"prune", "--table", dir / "head_scores.json", "--alpha", "0", "-o", dir / "plan.json"})
                .summary.exit_code,
            0);
  EXPECT_TRUE(read_json(dir / "plan.json").at("pruned").empty());
  const auto bias = invoke({"eval-bias", "--model", testing::fixture("toy_model.fasp").string(),
                            "--prompts", testing::fixture("prompts.jsonl").string(),
                            "--lexicon", testing::fixture("lexicon.tsv").string(),
                            "--category", "gender_and_sex", "--max-new", "4", "--seeds", "1", "2",
                            "--plan", dir / "plan.json", "-o", dir / "eval_bias.json"});
  ASSERT_EQ(bias.summary.exit_code, 0) << bias.err;
  const auto eb = read_json(dir / "eval_bias.json");
  EXPECT_EQ(eb.at("split"), "test");
  EXPECT_DOUBLE_EQ(eb.at("bias_change_pct").at("pooled"), 0.0);
  EXPECT_EQ(eb.at("pruned").at("per_seed").size(), 2u);

  const auto ppl = invoke({"eval-ppl", "--model", testing::fixture("toy_model.fasp").string(),
                           "--corpus", testing::fixture("corpus.txt").string(), "--plan",
                           dir / "plan.json", "-o", dir / "eval_ppl.json"});
  ASSERT_EQ(ppl.summary.exit_code, 0) << ppl.err;
  const auto ep = read_json(dir / "eval_ppl.json");
  EXPECT_DOUBLE_EQ(ep.at("ppl_change_pct"), 0.0);
  EXPECT_NEAR(ep.at("baseline").at("ppl").get<double>(), 258.09914417682717, 1e-6 * 258.1);
}

TEST(Cli, CorrelateFiveCategories) {
  testing::TempDir dir;
  const std::vector<std::string> cats{"a", "b", "c", "d", "e"};
  save_table(testing::synthetic_table(6, 12, 9, cats), dir / "t.json");
  ASSERT_EQ(invoke({"correlate", "--table", dir / "t.json", "-o", dir / "corr.csv"}).summary.exit_code, 0);
  std::ifstream in(dir / "corr.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# provenance: config_hash=", 0), 0u);
  std::getline(in, line);
  EXPECT_EQ(line, "category,a,b,c,d,e");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
    ++rows;
  }
  EXPECT_EQ(rows, 5);
}

TEST(Cli, ReportOnFullSweep) {
  testing::TempDir dir;
  save_table(testing::synthetic_table(6, 12, 9, {"a", "b"}), dir / "t.json");
  std::vector<SweepRow> rows;
  for (auto s : all_strategies()) {
    for (double a : {0.0, 0.05, 0.1, 0.15, 0.2}) {
      rows.push_back({s, a, "1", 20.0, 0.0, 0.3, 0.0});
      rows.push_back({s, a, "pooled", 20.0 + a, a * 5, 0.3 - a, -a * 100});
    }
  }
  {
    std::ofstream out(dir / "sweep.csv");
    write_sweep_csv(rows, out);
  }
  const auto inv = invoke({"report", "--sweep", dir / "sweep.csv", "--table", dir / "t.json", "-o",
                           dir / "report"});
  ASSERT_EQ(inv.summary.exit_code, 0) << inv.err;
  const auto csv = testing::read_file(dir / "report/sweep_summary.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 32);  // provenance + header + 30 rows
  EXPECT_TRUE(std::filesystem::exists(dir / "report/summary.md"));
  const auto ov = read_json(dir / "report/overlap.json");
  EXPECT_EQ(ov.at("sets").at("a").size(), 14u);
}

TEST(Cli, GenerateIsReproducible) {
  const std::vector<std::string> args{"generate", "--model", testing::fixture("toy_model.fasp").string(),
                                      "--prompt", "the cat", "--seed", "4", "--max-new", "6"};
  const auto a = invoke(args);
  ASSERT_EQ(a.summary.exit_code, 0) << a.err;
  EXPECT_EQ(a.out, invoke(args).out);
  testing::TempDir dir;
  auto to_file = args;
  to_file.insert(to_file.end(), {"-o", dir / "gen.json"});
  ASSERT_EQ(invoke(to_file).summary.exit_code, 0);
  EXPECT_EQ(read_json(dir / "gen.json").at("token_ids").size(), 6u);
}

}  // namespace
}  // namespace fasp

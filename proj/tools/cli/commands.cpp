#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "fasp/analysis.hpp"
#include "fasp/bias_eval.hpp"
#include "fasp/error.hpp"
#include "fasp/hashing.hpp"
#include "fasp/head_scoring.hpp"
#include "fasp/pruning.hpp"
#include "fasp/scorer.hpp"
#include "fasp/weights_io.hpp"
#include "run_config.hpp"

namespace fasp::cli {
namespace {

constexpr const char* kCacheEnv = "FASP_CACHE_DIR";

// Binds command-line options to RunConfig fields without touching the config
// until after parsing, so that only flags actually given override the file.
class FlagSet {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, T RunConfig::*field,
                   const std::string& help) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *holder, help);
    overlays_.push_back([holder, field, opt](RunConfig& c) {
      if (opt->count() > 0) c.*field = *holder;
    });
    return opt;
  }

  void add_flag(CLI::App* app, const std::string& name, bool RunConfig::*field, bool value,
                const std::string& help) {
    CLI::Option* opt = app->add_flag(name, help);
    overlays_.push_back([field, opt, value](RunConfig& c) {
      if (opt->count() > 0) c.*field = value;
    });
  }

  void apply(RunConfig& c) const {
    for (const auto& f : overlays_) f(c);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> overlays_;
};

struct Command {
  CLI::App* app = nullptr;
  FlagSet flags;
  std::string config_file;
};

void add_model(Command& c) {
  c.flags.add(c.app, "--model", &RunConfig::model_path, "model container file");
}

void add_corpus(Command& c) {
  c.flags.add(c.app, "--corpus", &RunConfig::corpus_path, "held-out text corpus");
  c.flags.add(c.app, "--window", &RunConfig::window, "perplexity window in tokens (default 128)");
}

void add_vocab(Command& c) {
  c.flags.add(c.app, "--vocab", &RunConfig::vocab_path, "word-level vocab JSON (default: byte-level)");
}

void add_prompts(Command& c) {
  c.flags.add(c.app, "--prompts", &RunConfig::prompts_path, "bias prompts, JSON lines");
  c.flags.add(c.app, "--lexicon", &RunConfig::lexicon_path, "toxicity lexicon TSV");
  c.flags.add(c.app, "--scorer-url", &RunConfig::scorer_url, "remote toxicity classifier base URL");
  c.flags.add(c.app, "--scorer-timeout-ms", &RunConfig::scorer_timeout_ms, "remote scorer timeout");
  c.flags.add(c.app, "--scorer-retries", &RunConfig::scorer_retries, "remote scorer retries");
  c.flags.add(c.app, "--val-ratio", &RunConfig::val_ratio, "validation share of each subgroup (default 0.2)");
  c.flags.add(c.app, "--split-seed", &RunConfig::split_seed, "seed of the validation/test split");
  c.flags.add(c.app, "--max-new", &RunConfig::max_new, "continuation length (default 20)");
  c.flags.add(c.app, "--temperature", &RunConfig::temperature, "sampling temperature (default 1.0)");
  add_vocab(c);
}

void add_categories(Command& c) {
  c.flags.add(c.app, "--category,--categories", &RunConfig::categories, "bias categories");
}

void add_exec(Command& c, bool cache) {
  c.flags.add(c.app, "--concurrency", &RunConfig::concurrency_limit, "worker threads (default 1)");
  if (cache) {
    c.flags.add(c.app, "--cache-dir", &RunConfig::cache_dir, "score cache directory (env FASP_CACHE_DIR)");
    c.flags.add_flag(c.app, "--no-cache", &RunConfig::use_cache, false, "disable the score cache");
  }
}

Command& new_command(std::vector<std::unique_ptr<Command>>& cmds, CLI::App& app,
                     const std::string& name, const std::string& help) {
  auto cmd = std::make_unique<Command>();
  cmd->app = app.add_subcommand(name, help);
  cmd->app->add_option("--config", cmd->config_file, "JSON config file");
  cmd->flags.add(cmd->app, "-o,--output", &RunConfig::output, "output path");
  cmds.push_back(std::move(cmd));
  return *cmds.back();
}

RunConfig resolve(const Command& cmd) {
  RunConfig cfg;
  if (!cmd.config_file.empty()) cfg = load_config_file(cmd.config_file, cfg);
  if (const char* env = std::getenv(kCacheEnv); env != nullptr && *env != '\0') cfg.cache_dir = env;
  cmd.flags.apply(cfg);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- inputs

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw InvalidArgumentError(std::string("missing required option ") + flag);
}

void require_file(const std::string& path, const char* flag) {
  require(path, flag);
  if (!std::filesystem::exists(path)) {
    throw IoError(std::string(flag) + ": no such file: " + path);
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string file_hash(const std::string& path) { return sha256_hex(read_text(path)); }

Vocab make_vocab(const RunConfig& cfg) {
  if (cfg.vocab_path.empty()) return Vocab::byte_level();
  require_file(cfg.vocab_path, "--vocab");
  return Vocab::load_word_level(cfg.vocab_path);
}

LoadedModel load_model_checked(const RunConfig& cfg, const Vocab& vocab) {
  require_file(cfg.model_path, "--model");
  auto m = load_model(cfg.model_path);
  if (static_cast<std::size_t>(m.config.vocab_size) != vocab.size()) {
    throw InvalidArgumentError("model vocab_size " + std::to_string(m.config.vocab_size) +
                               " does not match tokenizer size " + std::to_string(vocab.size()));
  }
  return m;
}

std::vector<TokenId> load_corpus(const RunConfig& cfg, const Vocab& vocab) {
  require_file(cfg.corpus_path, "--corpus");
  auto tokens = vocab.encode(read_text(cfg.corpus_path));
  if (tokens.size() < 2) throw InputError("corpus " + cfg.corpus_path + " has fewer than 2 tokens");
  return tokens;
}

std::unique_ptr<ToxicityScorer> make_scorer(const RunConfig& cfg) {
  if (!cfg.lexicon_path.empty()) {
    require_file(cfg.lexicon_path, "--lexicon");
    return std::make_unique<LexiconScorer>(LexiconScorer::load(cfg.lexicon_path));
  }
  if (!cfg.scorer_url.empty()) {
    RemoteScorerOptions o;
    o.url = cfg.scorer_url;
    o.timeout = std::chrono::milliseconds(cfg.scorer_timeout_ms);
    o.retries = cfg.scorer_retries;
    o.concurrency_limit = cfg.concurrency_limit;
    return std::make_unique<RemoteScorer>(o);
  }
  throw InvalidArgumentError("one of --lexicon or --scorer-url is required");
}

SplitDataset load_split(const RunConfig& cfg) {
  require_file(cfg.prompts_path, "--prompts");
  return split(load_prompts(cfg.prompts_path), cfg.val_ratio, cfg.split_seed);
}

std::string single_category(const RunConfig& cfg, const std::vector<std::string>& available) {
  if (cfg.categories.size() == 1) return cfg.categories.front();
  if (cfg.categories.empty() && available.size() == 1) return available.front();
  throw InvalidArgumentError("exactly one --category is required");
}

GenerationParams gen_params(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  GenerationParams g;
  g.max_new = cfg.max_new;
  g.temperature = static_cast<float>(cfg.temperature);
  g.seeds = seeds;
  return g;
}

nlohmann::json provenance(const RunConfig& cfg, const nlohmann::json& inputs) {
  return {{"config_hash", cfg.semantic_hash()}, {"inputs", inputs}};
}

std::string output_path(const RunConfig& cfg, const char* fallback) {
  return cfg.output.empty() ? std::string(fallback) : cfg.output;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << "\n";
  if (!out) throw IoError("failed writing " + path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

std::string csv_provenance_line(const RunConfig& cfg, const nlohmann::json& inputs) {
  std::string s = "# provenance: config_hash=" + cfg.semantic_hash();
  for (const auto& [k, v] : inputs.items()) s += " " + k + "=" + v.get<std::string>();
  return s + "\n";
}

// ---------------------------------------------------------------- commands

struct ToyOptions {
  int n_layers = 2;
  int heads = 4;
  int d_model = 32;
  int d_ff = 64;
  int vocab = static_cast<int>(Vocab::kByteVocabSize);
  int max_seq_len = 128;
  std::uint64_t seed = 1;
};

void cmd_make_toy(const RunConfig& cfg, const ToyOptions& t, std::ostream& out) {
  ModelConfig mc;
  mc.n_layers = t.n_layers;
  mc.n_heads_per_layer = t.heads;
  mc.d_model = t.d_model;
  mc.d_head = t.heads > 0 ? t.d_model / t.heads : 0;
  mc.d_ff = t.d_ff;
  mc.vocab_size = t.vocab;
  mc.max_seq_len = t.max_seq_len;
  mc.validate();
  const auto path = output_path(cfg, "toy_model.fasp");
  save_model(mc, make_toy_model(mc, t.seed), path);
  out << path << "\n";
}

void cmd_score_heads(const RunConfig& cfg, RunSummary& summary, std::ostream& err) {
  const Vocab vocab = make_vocab(cfg);
  const auto model = load_model_checked(cfg, vocab);
  const auto corpus = load_corpus(cfg, vocab);
  const auto data = load_split(cfg);
  const auto scorer = make_scorer(cfg);

  ScoreHeadsRequest req;
  req.corpus = corpus;
  req.window = cfg.window;
  req.vocab = &vocab;
  req.validation = &data.validation;
  req.categories = cfg.categories.empty() ? data.validation.categories() : cfg.categories;
  for (const auto& c : req.categories) {
    if (!data.validation.has_category(c)) {
      throw InvalidArgumentError("category '" + c + "' has no validation prompts");
    }
  }
  req.scorer = scorer.get();
  req.gen = gen_params(cfg, cfg.score_seeds);
  req.scope = cfg.scope == "all" ? BiasScope::kAllHeads : BiasScope::kNonCritical;
  req.gamma = cfg.gamma;

  std::optional<ScoreCache> cache;
  if (cfg.use_cache) cache.emplace(cfg.cache_dir);
  ScoringStats stats;
  ScoringOptions opts{cache ? &*cache : nullptr, cfg.concurrency_limit, &stats};
  const auto table = score_heads(model.config, model.weights, req, opts);

  const nlohmann::json inputs = {{"model", table.hashes.model},   {"prompts", table.hashes.dataset},
                                 {"corpus", table.hashes.corpus}, {"scorer", table.hashes.scorer},
                                 {"gen_params", table.hashes.gen_params}, {"vocab", vocab.fingerprint()}};
  save_table(table, output_path(cfg, "head_scores.json"), provenance(cfg, inputs));

  summary.ppl_evaluations = stats.ppl_evaluations;
  summary.bias_evaluations = stats.bias_evaluations;
  summary.cache_hits = stats.cache_hits;
  err << "score-heads: " << stats.ppl_evaluations << " perplexity evaluations, "
      << stats.bias_evaluations << " bias evaluations, " << stats.cache_hits << " cache hits\n";
}

void cmd_prune(const RunConfig& cfg) {
  require_file(cfg.table_path, "--table");
  const auto table = load_table(cfg.table_path);
  const Strategy strategy = parse_strategy(cfg.strategy);

  PruneConfig pc{strategy, cfg.gamma, cfg.alpha, cfg.random_seed, cfg.fd_epsilon};
  PlanInputs in;
  in.table = &table;
  in.window = cfg.window;
  in.concurrency = cfg.concurrency_limit;
  nlohmann::json inputs = {{"table", file_hash(cfg.table_path)}};

  std::optional<LoadedModel> model;
  std::vector<TokenId> corpus;
  if (strategy == Strategy::kMagnitude || strategy == Strategy::kGradient) {
    const Vocab vocab = make_vocab(cfg);
    model = load_model_checked(cfg, vocab);
    in.cfg = &model->config;
    in.weights = &model->weights;
    inputs["model"] = model_hash(model->config, model->weights);
    if (strategy == Strategy::kGradient) {
      corpus = load_corpus(cfg, vocab);
      in.corpus = corpus;
      inputs["corpus"] = corpus_hash(corpus);
    }
  }
  if (strategy == Strategy::kFasp || strategy == Strategy::kFairnessOnly) {
    in.category = single_category(cfg, table.bias_categories());
  }
  const auto plan = build_plan(pc, in);
  save_plan(plan, output_path(cfg, "plan.json"), provenance(cfg, inputs));
}

std::optional<PruningPlan> maybe_plan(const RunConfig& cfg, const ModelConfig& mc,
                                      nlohmann::json& inputs) {
  if (cfg.plan_path.empty()) return std::nullopt;
  require_file(cfg.plan_path, "--plan");
  inputs["plan"] = file_hash(cfg.plan_path);
  return load_plan(cfg.plan_path, mc.n_heads_per_layer);
}

nlohmann::json plan_summary(const std::optional<PruningPlan>& plan) {
  if (!plan) return nullptr;
  std::vector<int> pruned;
  for (const auto& h : plan->pruned) pruned.push_back(h.flat_index);
  return {{"strategy", to_string(plan->strategy)}, {"alpha", plan->alpha}, {"pruned", pruned}};
}

nlohmann::json evaluation_json(const BiasEvaluation& e) {
  nlohmann::json per_seed = nlohmann::json::object();
  for (const auto& [seed, r] : e.per_seed) per_seed[std::to_string(seed)] = to_json(r);
  return {{"pooled", to_json(e.pooled)}, {"per_seed", per_seed}};
}

void cmd_eval_bias(const RunConfig& cfg) {
  const Vocab vocab = make_vocab(cfg);
  const auto model = load_model_checked(cfg, vocab);
  const auto data = load_split(cfg);
  const auto scorer = make_scorer(cfg);
  const std::string category = single_category(cfg, data.test.categories());
  nlohmann::json inputs = {{"model", model_hash(model.config, model.weights)},
                           {"prompts", data.test.fingerprint()},
                           {"scorer", scorer->fingerprint()},
                           {"vocab", vocab.fingerprint()}};
  const auto plan = maybe_plan(cfg, model.config, inputs);
  const auto gen = gen_params(cfg, cfg.seeds);
  const int n = model.config.n_heads();

  const auto base = evaluate_model_bias(model.config, model.weights, HeadGateMask::all_present(n),
                                        vocab, data.test, category, *scorer, gen, cfg.concurrency_limit);
  const auto mask = plan ? apply_plan(*plan, n) : HeadGateMask::all_present(n);
  const auto pruned = evaluate_model_bias(model.config, model.weights, mask, vocab, data.test,
                                          category, *scorer, gen, cfg.concurrency_limit);

  nlohmann::json change_per_seed = nlohmann::json::object();
  for (const auto& [seed, r] : pruned.per_seed) {
    change_per_seed[std::to_string(seed)] = percent_change(base.per_seed.at(seed).bias, r.bias);
  }
  const nlohmann::json result = {
      {"category", category},
      {"split", "test"},
      {"plan", plan_summary(plan)},
      {"baseline", evaluation_json(base)},
      {"pruned", evaluation_json(pruned)},
      {"bias_change_pct",
       {{"pooled", percent_change(base.pooled.bias, pruned.pooled.bias)}, {"per_seed", change_per_seed}}},
      {"provenance", provenance(cfg, inputs)}};
  write_json(output_path(cfg, "eval_bias.json"), result);
}

nlohmann::json ppl_json(const PerplexityResult& r) {
  return {{"ppl", r.ppl}, {"mean_nll", r.mean_nll}, {"total_tokens", r.total_tokens}};
}

void cmd_eval_ppl(const RunConfig& cfg) {
  const Vocab vocab = make_vocab(cfg);
  const auto model = load_model_checked(cfg, vocab);
  const auto corpus = load_corpus(cfg, vocab);
  nlohmann::json inputs = {{"model", model_hash(model.config, model.weights)},
                           {"corpus", corpus_hash(corpus)}};
  const auto plan = maybe_plan(cfg, model.config, inputs);
  const int n = model.config.n_heads();
  const auto base = perplexity(model.config, model.weights, HeadGateMask::all_present(n), corpus, cfg.window);
  const auto mask = plan ? apply_plan(*plan, n) : HeadGateMask::all_present(n);
  const auto pruned = perplexity(model.config, model.weights, mask, corpus, cfg.window);
  const nlohmann::json result = {{"window", cfg.window},
                                 {"plan", plan_summary(plan)},
                                 {"baseline", ppl_json(base)},
                                 {"pruned", ppl_json(pruned)},
                                 {"ppl_change_pct", percent_change(base.ppl, pruned.ppl)},
                                 {"provenance", provenance(cfg, inputs)}};
  write_json(output_path(cfg, "eval_ppl.json"), result);
}

struct GenerateOptions {
  std::string prompt;
  std::uint64_t seed = 1;
};

void cmd_generate(const RunConfig& cfg, const GenerateOptions& g, std::ostream& out) {
  const Vocab vocab = make_vocab(cfg);
  const auto model = load_model_checked(cfg, vocab);
  if (g.prompt.empty()) throw InvalidArgumentError("--prompt must be non-empty");
  nlohmann::json inputs = {{"model", model_hash(model.config, model.weights)}};
  const auto plan = maybe_plan(cfg, model.config, inputs);
  const int n = model.config.n_heads();
  const auto mask = plan ? apply_plan(*plan, n) : HeadGateMask::all_present(n);
  SamplingParams sp;
  sp.max_new = cfg.max_new;
  sp.temperature = static_cast<float>(cfg.temperature);
  sp.seed = g.seed;
  sp.eos = vocab.specials().eos;
  const auto ids = generate(model.config, model.weights, mask, vocab.encode(g.prompt), sp);
  const std::string text = vocab.decode(ids);
  if (cfg.output.empty()) {
    out << text << "\n";
    return;
  }
  write_json(cfg.output, {{"prompt", g.prompt},
                          {"continuation", text},
                          {"token_ids", ids},
                          {"seed", g.seed},
                          {"provenance", provenance(cfg, inputs)}});
}

void cmd_correlate(const RunConfig& cfg) {
  require_file(cfg.table_path, "--table");
  const auto table = load_table(cfg.table_path);
  const auto cats = cfg.categories.empty() ? table.bias_categories() : cfg.categories;
  const auto m = correlate(table, cats);
  const nlohmann::json inputs = {{"table", file_hash(cfg.table_path)}};
  std::ostringstream csv;
  csv << csv_provenance_line(cfg, inputs);
  write_correlation_csv(m, csv);
  write_text(output_path(cfg, "correlation.csv"), csv.str());
}

void cmd_sweep(const RunConfig& cfg) {
  const Vocab vocab = make_vocab(cfg);
  const auto model = load_model_checked(cfg, vocab);
  const auto corpus = load_corpus(cfg, vocab);
  const auto data = load_split(cfg);
  const auto scorer = make_scorer(cfg);
  require_file(cfg.table_path, "--table");
  const auto table = load_table(cfg.table_path);
  if (cfg.alphas.empty()) throw InvalidArgumentError("--alphas is required");

  SweepRequest req;
  req.plan_inputs.cfg = &model.config;
  req.plan_inputs.weights = &model.weights;
  req.plan_inputs.table = &table;
  req.plan_inputs.category = single_category(cfg, data.test.categories());
  req.plan_inputs.corpus = corpus;
  req.plan_inputs.window = cfg.window;
  req.plan_inputs.concurrency = cfg.concurrency_limit;
  if (cfg.strategies.empty()) {
    req.strategies = all_strategies();
  } else {
    for (const auto& s : cfg.strategies) req.strategies.push_back(parse_strategy(s));
  }
  req.alphas = cfg.alphas;
  req.gamma = cfg.gamma;
  req.random_seed = cfg.random_seed;
  req.fd_epsilon = cfg.fd_epsilon;
  req.vocab = &vocab;
  req.test = &data.test;
  req.scorer = scorer.get();
  req.gen = gen_params(cfg, cfg.seeds);
  const auto rows = sweep(req);

  const nlohmann::json inputs = {{"model", model_hash(model.config, model.weights)},
                                 {"corpus", corpus_hash(corpus)},
                                 {"prompts", data.test.fingerprint()},
                                 {"scorer", scorer->fingerprint()},
                                 {"table", file_hash(cfg.table_path)}};
  std::ostringstream csv;
  csv << csv_provenance_line(cfg, inputs);
  write_sweep_csv(rows, csv);
  write_text(output_path(cfg, "sweep.csv"), csv.str());
}

void cmd_report(const RunConfig& cfg) {
  require_file(cfg.sweep_path, "--sweep");
  require_file(cfg.table_path, "--table");
  std::ifstream sweep_in(cfg.sweep_path);
  const auto rows = read_sweep_csv(sweep_in);
  const auto table = load_table(cfg.table_path);
  const auto cats = cfg.categories.empty() ? table.bias_categories() : cfg.categories;

  std::map<std::string, std::vector<int>> sets;
  for (const auto& c : cats) sets[c] = top_heads(table, c, cfg.top_ratio);
  ReportProvenance prov;
  prov.config_hash = cfg.semantic_hash();
  prov.input_hashes = {{"sweep", file_hash(cfg.sweep_path)}, {"table", file_hash(cfg.table_path)}};
  emit_report(rows, correlate(table, cats), overlap(sets), output_path(cfg, "report"), prov);
}

}  // namespace

RunSummary run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fairness-aware attention head pruning workbench", "fasp"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> cmds;

  ToyOptions toy;
  Command& make_toy = new_command(cmds, app, "make-toy", "write a seeded random toy model");
  make_toy.app->add_option("--n-layers", toy.n_layers, "layers");
  make_toy.app->add_option("--heads", toy.heads, "heads per layer");
  make_toy.app->add_option("--d-model", toy.d_model, "model width");
  make_toy.app->add_option("--d-ff", toy.d_ff, "feed-forward width");
  make_toy.app->add_option("--vocab-size", toy.vocab, "vocabulary size (default 259, byte-level)");
  make_toy.app->add_option("--max-seq-len", toy.max_seq_len, "context length");
  make_toy.app->add_option("--seed", toy.seed, "initialization seed");

  Command& score = new_command(cmds, app, "score-heads", "compute z_ppl and z_bias for every head");
  add_model(score);
  add_corpus(score);
  add_prompts(score);
  add_categories(score);
  add_exec(score, true);
  score.flags.add(score.app, "--scope", &RunConfig::scope, "z_bias scope: all | non-critical");
  score.flags.add(score.app, "--gamma", &RunConfig::gamma, "protected ratio for --scope non-critical");
  score.flags.add(score.app, "--score-seeds", &RunConfig::score_seeds, "generation seeds for z_bias (default 1)");

  Command& prune = new_command(cmds, app, "prune", "build a pruning plan");
  prune.flags.add(prune.app, "--table", &RunConfig::table_path, "head score table");
  prune.flags.add(prune.app, "--strategy", &RunConfig::strategy,
                  "fasp | magnitude | gradient | random | fairness_only | performance_only");
  prune.flags.add(prune.app, "--gamma", &RunConfig::gamma, "protected ratio (default 0.3)");
  prune.flags.add(prune.app, "--alpha", &RunConfig::alpha, "pruned ratio");
  prune.flags.add(prune.app, "--seed", &RunConfig::random_seed, "seed for the random strategy");
  prune.flags.add(prune.app, "--fd-epsilon", &RunConfig::fd_epsilon, "finite-difference step (default 1e-2)");
  add_categories(prune);
  add_model(prune);
  add_corpus(prune);
  add_vocab(prune);
  add_exec(prune, false);

  Command& eval_bias = new_command(cmds, app, "eval-bias", "test-set bias with and without a plan");
  add_model(eval_bias);
  add_prompts(eval_bias);
  add_categories(eval_bias);
  add_exec(eval_bias, false);
  eval_bias.flags.add(eval_bias.app, "--plan", &RunConfig::plan_path, "pruning plan");
  eval_bias.flags.add(eval_bias.app, "--seeds", &RunConfig::seeds, "generation seeds (default 1 2 3)");

  Command& eval_ppl = new_command(cmds, app, "eval-ppl", "corpus perplexity with and without a plan");
  add_model(eval_ppl);
  add_corpus(eval_ppl);
  add_vocab(eval_ppl);
  eval_ppl.flags.add(eval_ppl.app, "--plan", &RunConfig::plan_path, "pruning plan");

  GenerateOptions gen_opts;
  Command& gen = new_command(cmds, app, "generate", "sample a continuation");
  add_model(gen);
  add_vocab(gen);
  gen.app->add_option("--prompt", gen_opts.prompt, "prompt text")->required();
  gen.app->add_option("--seed", gen_opts.seed, "sampling seed");
  gen.flags.add(gen.app, "--max-new", &RunConfig::max_new, "tokens to generate (default 20)");
  gen.flags.add(gen.app, "--temperature", &RunConfig::temperature, "0 = greedy (default 1.0)");
  gen.flags.add(gen.app, "--plan", &RunConfig::plan_path, "pruning plan");

  Command& corr = new_command(cmds, app, "correlate", "correlation of z_bias across categories");
  corr.flags.add(corr.app, "--table", &RunConfig::table_path, "head score table");
  add_categories(corr);

  Command& sw = new_command(cmds, app, "sweep", "evaluate strategies across pruning ratios");
  add_model(sw);
  add_corpus(sw);
  add_prompts(sw);
  add_categories(sw);
  add_exec(sw, false);
  sw.flags.add(sw.app, "--table", &RunConfig::table_path, "head score table");
  sw.flags.add(sw.app, "--strategies", &RunConfig::strategies, "strategies (default all six)");
  sw.flags.add(sw.app, "--alphas", &RunConfig::alphas, "pruning ratios");
  sw.flags.add(sw.app, "--gamma", &RunConfig::gamma, "FASP protected ratio (default 0.3)");
  sw.flags.add(sw.app, "--seeds", &RunConfig::seeds, "generation seeds (default 1 2 3)");
  sw.flags.add(sw.app, "--random-seed", &RunConfig::random_seed, "seed for the random strategy");
  sw.flags.add(sw.app, "--fd-epsilon", &RunConfig::fd_epsilon, "finite-difference step");

  Command& rep = new_command(cmds, app, "report", "CSV and Markdown summary of a sweep and a table");
  rep.flags.add(rep.app, "--sweep", &RunConfig::sweep_path, "sweep CSV");
  rep.flags.add(rep.app, "--table", &RunConfig::table_path, "head score table");
  rep.flags.add(rep.app, "--top-ratio", &RunConfig::top_ratio, "share of heads in each top set (default 0.2)");
  add_categories(rep);

  RunSummary summary;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    summary.exit_code = code == 0 ? kSuccess : kUsageError;
    return summary;
  }

  try {
    for (const auto& cmd : cmds) {
      if (!cmd->app->parsed()) continue;
      const RunConfig cfg = resolve(*cmd);
      const std::string name = cmd->app->get_name();
      if (name == "make-toy") cmd_make_toy(cfg, toy, out);
      else if (name == "score-heads") cmd_score_heads(cfg, summary, err);
      else if (name == "prune") cmd_prune(cfg);
      else if (name == "eval-bias") cmd_eval_bias(cfg);
      else if (name == "eval-ppl") cmd_eval_ppl(cfg);
      else if (name == "generate") cmd_generate(cfg, gen_opts, out);
      else if (name == "correlate") cmd_correlate(cfg);
      else if (name == "sweep") cmd_sweep(cfg);
      else if (name == "report") cmd_report(cfg);
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    summary.exit_code = kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    summary.exit_code = kComputationError;
  }
  return summary;
}

}  // namespace fasp::cli

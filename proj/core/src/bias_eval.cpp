#include "fasp/bias_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fasp/error.hpp"
#include "fasp/hashing.hpp"
#include "fasp/rng.hpp"
#include "parallel.hpp"

namespace fasp {

PromptDataset::PromptDataset(std::vector<PromptRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.bias_category.empty() || r.subgroup.empty() || r.text.empty()) {
      throw InvalidArgumentError("prompt record " + std::to_string(i) +
                                 " has an empty category, subgroup or text");
    }
    index_[r.bias_category][r.subgroup].push_back(i);
  }
}

bool PromptDataset::has_category(std::string_view category) const {
  return index_.find(std::string(category)) != index_.end();
}

std::vector<std::string> PromptDataset::categories() const {
  std::vector<std::string> out;
  for (const auto& [cat, _] : index_) out.push_back(cat);
  return out;
}

const PromptDataset::SubgroupIndex& PromptDataset::subgroups(std::string_view category) const {
  auto it = index_.find(std::string(category));
  if (it == index_.end()) {
    throw InvalidArgumentError("bias category '" + std::string(category) + "' not in dataset");
  }
  return it->second;
}

std::string PromptDataset::fingerprint() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : records_) j.push_back({r.bias_category, r.subgroup, r.text});
  return sha256_hex(j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
}

PromptDataset parse_prompts(std::istream& in, std::string_view source) {
  const std::string where = source.empty() ? std::string() : std::string(source) + ": ";
  std::vector<PromptRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    PromptRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      r.bias_category = j.at("bias_category").get<std::string>();
      r.subgroup = j.at("subgroup").get<std::string>();
      r.text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, where + e.what());
    }
    if (r.bias_category.empty() || r.subgroup.empty() || r.text.empty()) {
      throw ParseError(line_no, where + "bias_category, subgroup and text must be non-empty");
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw InputError(where + "prompt file contains no records");
  return PromptDataset(std::move(records));
}

PromptDataset load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prompts file " + path.string());
  return parse_prompts(in, path.string());
}

SplitDataset split(const PromptDataset& d, double val_ratio, std::uint64_t seed) {
  if (!(val_ratio > 0.0 && val_ratio < 1.0)) {
    throw InvalidArgumentError("val_ratio must lie strictly between 0 and 1");
  }
  std::vector<bool> to_validation(d.size(), false);
  for (const auto& [category, groups] : d.index()) {
    for (const auto& [subgroup, members] : groups) {
      if (members.empty()) {
        throw InvalidArgumentError("subgroup '" + subgroup + "' has no records");
      }
      std::vector<std::size_t> order = members;
      RngCursor rng(seed, stable_hash64(category + '\x1f' + subgroup));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
      }
      // Guard against 0.2 * 10 landing a hair above 2.
      const auto n_val = static_cast<std::size_t>(
          std::ceil(val_ratio * static_cast<double>(order.size()) - 1e-9));
      for (std::size_t i = 0; i < n_val; ++i) to_validation[order[i]] = true;
    }
  }
  std::vector<PromptRecord> val, test;
  for (std::size_t i = 0; i < d.size(); ++i) {
    (to_validation[i] ? val : test).push_back(d.records()[i]);
  }
  SplitDataset out;
  out.validation = PromptDataset(std::move(val));
  out.test = PromptDataset(std::move(test));
  out.split_seed = seed;
  return out;
}

BiasReport bias_metric(const std::map<std::string, std::vector<ToxicityScore>>& tox_by_subgroup,
                       std::string category) {
  if (tox_by_subgroup.size() < 2) {
    throw InvalidArgumentError("bias metric needs at least two subgroups");
  }
  BiasReport r;
  r.category = std::move(category);
  double sum_of_means = 0.0;
  for (const auto& [subgroup, scores] : tox_by_subgroup) {
    if (scores.empty()) {
      throw InvalidArgumentError("subgroup '" + subgroup + "' has no toxicity scores");
    }
    // Summing in sorted order makes the mean independent of score order.
    std::vector<double> values;
    values.reserve(scores.size());
    for (const auto& s : scores) values.push_back(s.value());
    std::sort(values.begin(), values.end());
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    r.subgroup_means[subgroup] = mean;
    r.n_prompts[subgroup] = static_cast<std::int64_t>(scores.size());
    sum_of_means += mean;
  }
  r.grand_mean = sum_of_means / static_cast<double>(r.subgroup_means.size());
  for (const auto& [_, mean] : r.subgroup_means) r.bias += std::abs(mean - r.grand_mean);
  return r;
}

nlohmann::json to_json(const BiasReport& r) {
  return {{"category", r.category},       {"subgroup_means", r.subgroup_means},
          {"grand_mean", r.grand_mean},   {"bias", r.bias},
          {"n_prompts", r.n_prompts}};
}

BiasReport bias_report_from_json(const nlohmann::json& j) {
  BiasReport r;
  r.category = j.at("category").get<std::string>();
  r.subgroup_means = j.at("subgroup_means").get<std::map<std::string, double>>();
  r.grand_mean = j.at("grand_mean").get<double>();
  r.bias = j.at("bias").get<double>();
  r.n_prompts = j.at("n_prompts").get<std::map<std::string, std::int64_t>>();
  return r;
}

std::string GenerationParams::fingerprint() const {
  nlohmann::json j = {{"max_new", max_new}, {"temperature", temperature}, {"seeds", seeds}};
  return sha256_hex(j.dump());
}

std::vector<Continuation> generate_continuations(const ModelConfig& cfg, const ModelWeights& w,
                                                 const HeadGateMask& mask, const Vocab& vocab,
                                                 const PromptDataset& d, std::string_view category,
                                                 const GenerationParams& gen, int concurrency) {
  d.subgroups(category);  // validates the category
  if (gen.seeds.empty()) throw InvalidArgumentError("generation needs at least one seed");
  std::vector<Continuation> jobs;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.records()[i].bias_category != category) continue;
    for (std::uint64_t seed : gen.seeds) jobs.push_back({i, seed, {}});
  }
  detail::parallel_for(jobs.size(), concurrency, [&](std::size_t j) {
    auto& job = jobs[j];
    const auto& record = d.records()[job.record_index];
    try {
      const auto prompt = vocab.encode(record.text);
      SamplingParams sp;
      sp.max_new = gen.max_new;
      sp.temperature = gen.temperature;
      sp.seed = job.seed;
      sp.eos = vocab.specials().eos;
      job.text = vocab.decode(generate(cfg, w, mask, prompt, sp));
    } catch (const Error& e) {
      throw Error("prompt " + std::to_string(job.record_index) + " (" + record.subgroup + ": \"" +
                  record.text + "\"), seed " + std::to_string(job.seed) + ": " + e.what());
    }
  });
  return jobs;
}

BiasEvaluation evaluate_model_bias(const ModelConfig& cfg, const ModelWeights& w,
                                   const HeadGateMask& mask, const Vocab& vocab,
                                   const PromptDataset& d, std::string_view category,
                                   const ToxicityScorer& scorer, const GenerationParams& gen,
                                   int concurrency) {
  const auto continuations = generate_continuations(cfg, w, mask, vocab, d, category, gen, concurrency);
  std::vector<std::string> texts;
  texts.reserve(continuations.size());
  for (const auto& c : continuations) texts.push_back(c.text);
  const auto scores = score_toxicity(scorer, texts);

  std::map<std::string, std::vector<ToxicityScore>> pooled;
  std::map<std::uint64_t, std::map<std::string, std::vector<ToxicityScore>>> by_seed;
  for (std::size_t i = 0; i < continuations.size(); ++i) {
    const auto& subgroup = d.records()[continuations[i].record_index].subgroup;
    pooled[subgroup].push_back(scores[i]);
    by_seed[continuations[i].seed][subgroup].push_back(scores[i]);
  }
  BiasEvaluation out;
  out.pooled = bias_metric(pooled, std::string(category));
  for (const auto& [seed, groups] : by_seed) out.per_seed[seed] = bias_metric(groups, std::string(category));
  return out;
}

}  // namespace fasp

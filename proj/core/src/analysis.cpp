#include "fasp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "fasp/error.hpp"
#include "fasp/numerics.hpp"
#include "fasp/ranking.hpp"

namespace fasp {
namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  const auto s = fmt::format("{:.6f}", v);
  return s == "-0.000000" ? s.substr(1) : s;
}

std::string provenance_line(const ReportProvenance& p) {
  std::string s = "# provenance: config_hash=" + p.config_hash;
  for (const auto& [name, hash] : p.input_hashes) s += " " + name + "=" + hash;
  return s + "\n";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s.empty() ? "(none)" : s;
}

}  // namespace

CorrelationMatrix correlate(const HeadScoreTable& table, const std::vector<std::string>& categories) {
  CorrelationMatrix m;
  m.categories = categories;
  const std::size_t n = categories.size();
  std::vector<std::vector<double>> vectors;
  for (const auto& c : categories) vectors.push_back(table.z_bias_vector(c));
  m.values.assign(n * n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      std::optional<double> r;
      try {
        r = pearson(vectors[i], vectors[j]);
        if (i == j) r = 1.0;
      } catch (const UndefinedCorrelationError&) {
        r = std::nullopt;
      }
      m.values[i * n + j] = r;
      m.values[j * n + i] = r;
    }
  }
  return m;
}

std::vector<int> top_heads(const HeadScoreTable& table, const std::string& category, double k) {
  const auto z = table.z_bias_vector(category);
  const std::size_t count = prune_count(k, z.size());
  const auto order = argsort(z, SortOrder::kDescending);
  std::vector<int> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(static_cast<int>(order[i]));
  return out;
}

const std::vector<int>& OverlapReport::shared_by_all() const {
  static const std::vector<int> kEmpty;
  auto it = shared_by.find(static_cast<int>(sets.size()));
  return it == shared_by.end() ? kEmpty : it->second;
}

OverlapReport overlap(const std::map<std::string, std::vector<int>>& sets) {
  OverlapReport r;
  r.sets = sets;
  std::map<int, int> membership;
  for (auto& [cat, heads] : r.sets) {
    std::sort(heads.begin(), heads.end());
    heads.erase(std::unique(heads.begin(), heads.end()), heads.end());
    for (int h : heads) ++membership[h];
  }
  const int n_sets = static_cast<int>(r.sets.size());
  for (int m = 2; m <= n_sets; ++m) {
    auto& shared = r.shared_by[m];
    for (const auto& [h, count] : membership) {
      if (count >= m) shared.push_back(h);
    }
  }
  for (auto a = r.sets.begin(); a != r.sets.end(); ++a) {
    for (auto b = std::next(a); b != r.sets.end(); ++b) {
      std::vector<int> both;
      std::set_intersection(a->second.begin(), a->second.end(), b->second.begin(), b->second.end(),
                            std::back_inserter(both));
      r.pairwise[{a->first, b->first}] = std::move(both);
    }
  }
  return r;
}

void write_correlation_csv(const CorrelationMatrix& m, std::ostream& out) {
  out << "category";
  for (const auto& c : m.categories) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << m.categories[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const auto& v = m.at(i, j);
      out << ',' << (v ? num(*v) : std::string("undefined"));
    }
    out << '\n';
  }
}

nlohmann::json to_json(const OverlapReport& r) {
  nlohmann::json shared = nlohmann::json::object();
  for (const auto& [m, heads] : r.shared_by) shared[std::to_string(m)] = heads;
  nlohmann::json pairwise = nlohmann::json::object();
  for (const auto& [key, heads] : r.pairwise) pairwise[key.first + "&" + key.second] = heads;
  return {{"head_index_base", 0}, {"sets", r.sets}, {"shared_by", shared}, {"pairwise", pairwise}};
}

void emit_report(std::span<const SweepRow> sweep_rows, const CorrelationMatrix& correlation,
                 const OverlapReport& ov, const std::filesystem::path& dir,
                 const ReportProvenance& provenance) {
  std::filesystem::create_directories(dir);
  const std::string prov = provenance.empty() ? "" : provenance_line(provenance);

  std::vector<SweepRow> pooled;
  for (const auto& r : sweep_rows) {
    if (r.seed == "pooled") pooled.push_back(r);
  }

  std::ostringstream csv;
  csv << prov << "strategy,alpha,ppl,ppl_change_pct,bias,bias_change_pct\n";
  for (const auto& r : pooled) {
    csv << to_string(r.strategy) << ',' << num(r.alpha) << ',' << num(r.ppl) << ','
        << num(r.ppl_change_pct) << ',' << num(r.bias) << ',' << num(r.bias_change_pct) << '\n';
  }
  write_file(dir / "sweep_summary.csv", csv.str());

  std::ostringstream corr;
  corr << prov;
  write_correlation_csv(correlation, corr);
  write_file(dir / "correlation.csv", corr.str());

  auto ov_json = to_json(ov);
  if (!provenance.empty()) {
    ov_json["provenance"] = {{"config_hash", provenance.config_hash},
                             {"inputs", provenance.input_hashes}};
  }
  write_file(dir / "overlap.json", ov_json.dump(2) + "\n");

  std::ostringstream md;
  md << "# Pruning report\n\n";
  if (!provenance.empty()) {
    md << "Config hash: `" << provenance.config_hash << "`\n\n";
    for (const auto& [name, hash] : provenance.input_hashes) md << "- " << name << ": `" << hash << "`\n";
    md << "\n";
  }
  md << "## Pruning sweep (pooled over seeds, change relative to the unpruned model)\n\n";
  md << "| strategy | alpha | ppl | ppl change % | bias | bias change % |\n";
  md << "|---|---|---|---|---|---|\n";
  for (const auto& r : pooled) {
    md << "| " << to_string(r.strategy) << " | " << num(r.alpha) << " | " << num(r.ppl) << " | "
       << num(r.ppl_change_pct) << " | " << num(r.bias) << " | " << num(r.bias_change_pct) << " |\n";
  }
  md << "\n## Correlation of head bias scores\n\n";
  md << "| |";
  for (const auto& c : correlation.categories) md << ' ' << c << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < correlation.size(); ++i) md << "---|";
  md << "\n";
  for (std::size_t i = 0; i < correlation.size(); ++i) {
    md << "| " << correlation.categories[i] << " |";
    for (std::size_t j = 0; j < correlation.size(); ++j) {
      const auto& v = correlation.at(i, j);
      md << ' ' << (v ? num(*v) : std::string("undefined")) << " |";
    }
    md << "\n";
  }
  md << "\n## Most bias-promoting heads (0-based flat indices)\n\n";
  for (const auto& [cat, heads] : ov.sets) md << "- " << cat << ": " << join(heads) << "\n";
  md << "\n";
  for (auto it = ov.shared_by.rbegin(); it != ov.shared_by.rend(); ++it) {
    md << "- shared by >= " << it->first << " categories: " << join(it->second) << "\n";
  }
  write_file(dir / "summary.md", md.str());
}

}  // namespace fasp

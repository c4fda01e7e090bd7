#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fasp/head_scoring.hpp"
#include "fasp/pruning.hpp"

namespace fasp {

/// Pearson correlations of z_bias across heads between categories. A cell is
/// nullopt when either category's scores are constant.
struct CorrelationMatrix {
  std::vector<std::string> categories;
  std::vector<std::optional<double>> values;  // row-major, n x n

  std::size_t size() const noexcept { return categories.size(); }
  const std::optional<double>& at(std::size_t i, std::size_t j) const {
    return values[i * categories.size() + j];
  }
};

CorrelationMatrix correlate(const HeadScoreTable& table, const std::vector<std::string>& categories);

/// Flat indices sorted by z_bias descending (ties to the lower index), first round(k * N_h).
std::vector<int> top_heads(const HeadScoreTable& table, const std::string& category, double k);

struct OverlapReport {
  std::map<std::string, std::vector<int>> sets;
  /// shared_by[m] = heads appearing in at least m of the sets, for m = 2..#sets.
  std::map<int, std::vector<int>> shared_by;
  /// Pairwise intersections keyed by (category_a, category_b), a < b.
  std::map<std::pair<std::string, std::string>, std::vector<int>> pairwise;

  const std::vector<int>& shared_by_all() const;
};

OverlapReport overlap(const std::map<std::string, std::vector<int>>& sets);

void write_correlation_csv(const CorrelationMatrix& m, std::ostream& out);
nlohmann::json to_json(const OverlapReport& r);

struct ReportProvenance {
  std::string config_hash;
  std::map<std::string, std::string> input_hashes;

  bool empty() const noexcept { return config_hash.empty() && input_hashes.empty(); }
};

/// Writes sweep_summary.csv (pooled rows), correlation.csv, overlap.json and
/// summary.md into `dir`. Output bytes depend only on the arguments.
void emit_report(std::span<const SweepRow> sweep_rows, const CorrelationMatrix& correlation,
                 const OverlapReport& overlap, const std::filesystem::path& dir,
                 const ReportProvenance& provenance = {});

}  // namespace fasp

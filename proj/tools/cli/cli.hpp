#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fasp::cli {

enum ExitCode : int { kSuccess = 0, kComputationError = 1, kUsageError = 2 };

struct RunSummary {
  int exit_code = kSuccess;
  /// Model evaluations performed while scoring heads (cache misses).
  std::int64_t ppl_evaluations = 0;
  std::int64_t bias_evaluations = 0;
  std::int64_t cache_hits = 0;
};

/// Runs one invocation; `args` excludes the program name.
RunSummary run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fasp::cli

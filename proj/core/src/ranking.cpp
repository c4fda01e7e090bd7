#include "fasp/ranking.hpp"

#include <cmath>

#include "fasp/error.hpp"
#include "fasp/numerics.hpp"

namespace fasp {
namespace {

// Products such as 0.3 * 10 can land a few ulps below the integer they
// denote; a small slack keeps the counts at their decimal meaning.
constexpr double kCountSlack = 1e-9;

}  // namespace

std::size_t protected_count(double gamma, std::size_t n_heads) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgumentError("gamma must lie in [0, 1)");
  return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(n_heads) + kCountSlack));
}

std::size_t prune_count(double alpha, std::size_t n_heads) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgumentError("alpha must lie in [0, 1]");
  const auto k = static_cast<std::size_t>(
      std::floor(alpha * static_cast<double>(n_heads) + 0.5 + kCountSlack));
  return std::min(k, n_heads);
}

std::vector<int> select_protected(std::span<const double> z_ppl, double gamma) {
  const std::size_t n = protected_count(gamma, z_ppl.size());
  const auto order = argsort(z_ppl, SortOrder::kAscending);
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<int>(order[i]));
  return out;
}

}  // namespace fasp

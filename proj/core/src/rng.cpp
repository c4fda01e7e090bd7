#include "fasp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fasp {

double CounterRng::normal(std::uint64_t counter) const noexcept {
  const double u1 = uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  const double radius = std::sqrt(-2.0 * std::log1p(-u1));
  return radius * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t n, std::uint64_t counter) const noexcept {
  const auto v = static_cast<std::uint64_t>(uniform(counter) * static_cast<double>(n));
  return std::min(v, n - 1);
}

}  // namespace fasp

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fasp {

/// floor(gamma * n_heads): size of the protected set.
std::size_t protected_count(double gamma, std::size_t n_heads);

/// round-half-up(alpha * n_heads): number of heads a plan prunes.
std::size_t prune_count(double alpha, std::size_t n_heads);

/// The floor(gamma * N) flat indices with the lowest z_ppl (ties to the lower
/// index), in that priority order.
std::vector<int> select_protected(std::span<const double> z_ppl, double gamma);

}  // namespace fasp

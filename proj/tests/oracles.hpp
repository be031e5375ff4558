#pragma once

#include <cmath>
#include <limits>
#include <vector>

namespace testutil {

// Minimum L1 cost over every monotone alignment path, by explicit
// enumeration. Only usable for short sequences.
inline double brute_force_dtw(const std::vector<double>& a, const std::vector<double>& b) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = a.size(), m = b.size();
  auto walk = [&](auto&& self, std::size_t i, std::size_t j, double cost) -> void {
    cost += std::abs(a[i] - b[j]);
    if (i + 1 == n && j + 1 == m) {
      best = std::min(best, cost);
      return;
    }
    if (i + 1 < n) self(self, i + 1, j, cost);
    if (j + 1 < m) self(self, i, j + 1, cost);
    if (i + 1 < n && j + 1 < m) self(self, i + 1, j + 1, cost);
  };
  walk(walk, 0, 0, 0.0);
  return best;
}

}  // namespace testutil

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace segeval {

/// Percentile with linear interpolation between order statistics:
/// rank = q/100 * (n-1), value = lerp(v[floor], v[ceil]).
/// Input must be sorted ascending and nonempty; q in [0, 100].
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty range");
  if (q < 0.0 || q > 100.0) throw std::invalid_argument("percentile q outside [0,100]");
  const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Sorting convenience for unsorted input.
inline double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return percentile_sorted(values, q);
}

inline double median_sorted(std::span<const double> sorted) {
  return percentile_sorted(sorted, 50.0);
}

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return median_sorted(values);
}

}  // namespace segeval

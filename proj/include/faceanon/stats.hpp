#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace faceanon {

/// Percentile in [0, 100] with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Mean summed in ascending order, so it does not depend on input order.
inline double sorted_mean(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("mean of an empty sample");
  std::sort(v.begin(), v.end());
  double acc = 0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace faceanon

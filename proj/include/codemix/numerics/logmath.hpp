#pragma once

#include <cmath>
#include <limits>

namespace codemix {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// log(exp(x) + exp(y)) without overflow; exact -inf when both are -inf.
inline double log_add(double x, double y) {
  const double m = x > y ? x : y;
  if (m == kLogZero) return m;
  return m + std::log1p(std::exp(-std::abs(x - y)));
}

}  // namespace codemix

#pragma once

#include <cmath>

namespace ddnerf {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Inverse of sigmoid for p in (0,1).
inline double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace ddnerf

#pragma once

#include <cmath>
#include <numbers>

namespace ddnerf::normal {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Standard normal density.
inline double pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

/// Standard normal CDF, accurate in the lower tail.
inline double cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

/// Upper-tail probability 1 - cdf(z), accurate in the upper tail.
inline double ccdf(double z) { return 0.5 * std::erfc(z * kInvSqrt2); }

/// cdf(b) - cdf(a) for a <= b without catastrophic cancellation when both
/// points sit in the same tail.
inline double mass_between(double a, double b) {
  if (a >= 0.0) return ccdf(a) - ccdf(b);
  if (b <= 0.0) return cdf(b) - cdf(a);
  return 0.5 * (std::erf(b * kInvSqrt2) - std::erf(a * kInvSqrt2));
}

/// Inverse of cdf for p in (0, 1).
double quantile(double p);

/// Inverse of ccdf for q in (0, 1).
double upper_quantile(double q);

}  // namespace ddnerf::normal

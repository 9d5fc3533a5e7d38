#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls the closed forms under test except
// where a routine is explicitly used as the function being integrated.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ddnerf/ray_distribution.hpp"

namespace oracle {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

/// Adaptive Gauss-Kronrod over [a, b] split at the given interior points.
inline double integrate(const std::function<double(double)>& f, double a, double b, std::vector<double> breaks = {}) {
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = std::max(a, breaks[i]);
    const double hi = std::min(b, breaks[i + 1]);
    if (!(hi > lo)) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 12, 1e-9);
  }
  return total;
}

/// Breakpoints around a Gaussian peak so the quadrature resolves narrow
/// components.
inline std::vector<double> peak_breaks(double mu, double sigma) {
  std::vector<double> b;
  for (double k : {-40.0, -30.0, -22.0, -16.0, -12.0, -8.0, -5.0, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 5.0,
                   8.0, 12.0, 16.0, 22.0, 30.0, 40.0})
    b.push_back(mu + k * sigma);
  return b;
}

/// Integral of g(t) * f_dd(t) over [a, b] by quadrature of mixture_pdf_eval.
inline double integrate_mixture(const ddnerf::DepthMixture& m, double a, double b,
                                const std::function<double(double)>& g = [](double) { return 1.0; }) {
  const auto& iv = m.intervals();
  double total = 0.0;
  for (std::size_t i = 0; i < iv.size(); ++i) {
    const double lo = std::max(a, iv.lo(i));
    const double hi = std::min(b, iv.hi(i));
    if (!(hi > lo)) continue;
    const auto& gi = m.gaussians()[i];
    const auto f = [&](double t) { return g(t) * ddnerf::mixture_pdf_eval(m, t); };
    total += integrate(f, lo, hi, gi.uniform ? std::vector<double>{} : peak_breaks(gi.mu_abs, gi.sigma_abs));
  }
  return total;
}

/// Smallest t with F(t) >= u, by bisection on a non-decreasing function.
inline double bisect_quantile(const std::function<double(double)>& cdf, double lo, double hi, double u) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (cdf(mid) < u ? lo : hi) = mid;
  }
  return hi;
}

struct MixtureDraw {
  std::vector<double> partitions;
  std::vector<double> weights;
  std::vector<double> mu_rel;
  std::vector<double> sigma_rel;
};

/// Random valid mixture parameters: uneven partitions, some empty bins,
/// relative widths spanning the floor up to wider than the interval.
inline MixtureDraw random_mixture_params(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  MixtureDraw d;
  double t = 0.5 + 2.0 * uni(rng);
  d.partitions.push_back(t);
  for (std::size_t i = 0; i < n; ++i) {
    t += 0.05 + 1.5 * uni(rng);
    d.partitions.push_back(t);
  }
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = uni(rng) < 0.2 ? 0.0 : uni(rng);
    any = any || w > 0.0;
    d.weights.push_back(w);
  }
  if (!any) d.weights[n / 2] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    d.mu_rel.push_back(0.01 + 0.98 * uni(rng));
    d.sigma_rel.push_back(std::pow(10.0, -3.0 + 3.3 * uni(rng)));
  }
  return d;
}

inline ddnerf::DepthMixture make_mixture(const MixtureDraw& d) {
  ddnerf::RayIntervalSet iv(d.partitions);
  return ddnerf::build_depth_mixture(ddnerf::normalize_to_pdf(d.weights, iv), d.mu_rel, d.sigma_rel);
}

/// Central finite difference of f along coordinate i of x.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 std::size_t i, double h = 1e-5) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

/// Relative error of one gradient component; components below floor in
/// both values are compared on the floor's scale.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace oracle

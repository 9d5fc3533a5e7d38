#include "ddnerf/ray_distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ddnerf/normal.hpp"

namespace ddnerf {

RayIntervalSet::RayIntervalSet(std::vector<double> partitions) : partitions_(std::move(partitions)) {
  if (partitions_.size() < 2) throw std::invalid_argument("RayIntervalSet needs at least two partitions");
  for (std::size_t i = 0; i < partitions_.size(); ++i) {
    if (!std::isfinite(partitions_[i])) throw std::invalid_argument("RayIntervalSet partitions must be finite");
    if (i > 0 && !(partitions_[i] > partitions_[i - 1]))
      throw std::invalid_argument("RayIntervalSet partitions must be strictly increasing (index " +
                                  std::to_string(i) + ")");
  }
}

RayIntervalSet RayIntervalSet::uniform(double near, double far, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform partition needs n >= 1");
  std::vector<double> t(n + 1);
  for (std::size_t i = 0; i <= n; ++i) t[i] = near + (far - near) * static_cast<double>(i) / static_cast<double>(n);
  t.back() = far;
  return RayIntervalSet(std::move(t));
}

std::vector<double> RayIntervalSet::deltas() const {
  std::vector<double> d(size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = delta(i);
  return d;
}

std::size_t RayIntervalSet::locate(double t) const {
  if (!(t >= front()) || t > back()) return size();
  if (t == back()) return size() - 1;
  auto it = std::upper_bound(partitions_.begin(), partitions_.end(), t);
  return static_cast<std::size_t>(it - partitions_.begin()) - 1;
}

DiscreteDepthPdf normalize_to_pdf(std::span<const double> weights, const RayIntervalSet& intervals) {
  if (weights.size() != intervals.size())
    throw std::invalid_argument("normalize_to_pdf: weight count does not match interval count");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("normalize_to_pdf: weights must be finite and >= 0");
    total += w;
  }
  DiscreteDepthPdf pdf{intervals, std::vector<double>(weights.size()), false};
  if (total <= 0.0) {
    std::fill(pdf.mass.begin(), pdf.mass.end(), 1.0 / static_cast<double>(weights.size()));
    pdf.degenerate = true;
    return pdf;
  }
  for (std::size_t i = 0; i < weights.size(); ++i) pdf.mass[i] = weights[i] / total;
  return pdf;
}

// ---------------------------------------------------------------------------
// IntervalGaussian

namespace {

IntervalGaussian finish(IntervalGaussian g) {
  if (std::isinf(g.sigma_abs)) {
    g.trunc_mass = 0.0;
    g.uniform = true;
    return g;
  }
  const double alpha = (g.lo - g.mu_abs) / g.sigma_abs;
  const double beta = (g.hi - g.mu_abs) / g.sigma_abs;
  g.trunc_mass = normal::mass_between(alpha, beta);
  g.uniform = g.trunc_mass < kTruncMassMin;
  return g;
}

}  // namespace

IntervalGaussian build_interval_gaussian(double mu_rel, double sigma_rel, double t_lo, double t_hi) {
  if (!std::isfinite(mu_rel) || !std::isfinite(sigma_rel) || !std::isfinite(t_lo) || !std::isfinite(t_hi))
    throw std::invalid_argument("build_interval_gaussian: non-finite input");
  if (mu_rel < 0.0 || mu_rel > 1.0) throw std::invalid_argument("build_interval_gaussian: mu_rel outside [0,1]");
  if (!(sigma_rel > 0.0)) throw std::invalid_argument("build_interval_gaussian: sigma_rel must be positive");
  if (!(t_lo < t_hi)) throw std::invalid_argument("build_interval_gaussian: empty interval");
  IntervalGaussian g;
  g.mu_rel = mu_rel;
  g.sigma_rel = std::max(sigma_rel, kSigmaRelMin);
  g.lo = t_lo;
  g.hi = t_hi;
  const double width = t_hi - t_lo;
  g.mu_abs = t_lo + mu_rel * width;
  g.sigma_abs = g.sigma_rel * width;
  return finish(g);
}

IntervalGaussian IntervalGaussian::widened(double factor) const {
  IntervalGaussian g = *this;
  g.sigma_abs = sigma_abs * factor;
  return finish(g);
}

double IntervalGaussian::pdf(double t) const {
  if (t < lo || t > hi) return 0.0;
  if (uniform) return 1.0 / (hi - lo);
  const double z = (t - mu_abs) / sigma_abs;
  return normal::pdf(z) / (sigma_abs * trunc_mass);
}

double IntervalGaussian::cdf(double t) const {
  if (t <= lo) return 0.0;
  if (t >= hi) return 1.0;
  if (uniform) return (t - lo) / (hi - lo);
  const double alpha = (lo - mu_abs) / sigma_abs;
  const double z = (t - mu_abs) / sigma_abs;
  // One formula per interval keeps the result monotone in t.
  const double m = alpha >= 0.0 ? normal::ccdf(alpha) - normal::ccdf(z) : normal::cdf(z) - normal::cdf(alpha);
  return std::clamp(m / trunc_mass, 0.0, 1.0);
}

double IntervalGaussian::mass(double a, double b) const {
  a = std::max(a, lo);
  b = std::min(b, hi);
  if (!(b > a)) return 0.0;
  if (uniform) return (b - a) / (hi - lo);
  return std::clamp(normal::mass_between((a - mu_abs) / sigma_abs, (b - mu_abs) / sigma_abs) / trunc_mass, 0.0, 1.0);
}

CdfGradient IntervalGaussian::cdf_gradient(double t) const {
  if (uniform || t <= lo || t >= hi) return {};
  const double s = sigma_abs;
  const double alpha = (lo - mu_abs) / s;
  const double beta = (hi - mu_abs) / s;
  const double z = (t - mu_abs) / s;
  const double g = normal::mass_between(alpha, z) / trunc_mass;
  const double pa = normal::pdf(alpha), pb = normal::pdf(beta), pz = normal::pdf(z);
  // d(x)/d(mu) = -1/s and d(x)/d(s) = -x/s for x in {alpha, z, beta}.
  const double num_mu = (pz - pa) * (-1.0 / s);
  const double k_mu = (pb - pa) * (-1.0 / s);
  const double num_s = (pz * z - pa * alpha) * (-1.0 / s);
  const double k_s = (pb * beta - pa * alpha) * (-1.0 / s);
  return {(num_mu - g * k_mu) / trunc_mass, (num_s - g * k_s) / trunc_mass};
}

double IntervalGaussian::quantile(double q) const {
  if (q <= 0.0) return lo;
  if (q >= 1.0) return hi;
  if (uniform) return lo + q * (hi - lo);

  const double alpha = (lo - mu_abs) / sigma_abs;
  const double beta = (hi - mu_abs) / sigma_abs;
  double t = std::numeric_limits<double>::quiet_NaN();
  const double lower = normal::cdf(alpha) + q * trunc_mass;
  if (lower > 0.0 && lower < 0.5) {
    t = mu_abs + sigma_abs * normal::quantile(lower);
  } else {
    const double upper = normal::ccdf(beta) + (1.0 - q) * trunc_mass;
    if (upper > 0.0 && upper < 1.0) t = mu_abs + sigma_abs * normal::upper_quantile(upper);
  }
  if (std::isfinite(t)) {
    t = std::clamp(t, lo, hi);
    if (std::abs(cdf(t) - q) <= 1e-12) return t;
  }

  // Bisection fallback for extreme quantiles.
  double a = lo, b = hi;
  for (int it = 0; it < 200 && b - a > 0.0; ++it) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    const double c = cdf(m);
    if (std::abs(c - q) <= 1e-13) return m;
    (c < q ? a : b) = m;
  }
  return 0.5 * (a + b);
}

double IntervalGaussian::mean() const {
  if (uniform) return 0.5 * (lo + hi);
  const double alpha = (lo - mu_abs) / sigma_abs;
  const double beta = (hi - mu_abs) / sigma_abs;
  const double m = mu_abs + sigma_abs * (normal::pdf(alpha) - normal::pdf(beta)) / trunc_mass;
  return std::clamp(m, lo, hi);
}

double truncated_pdf_eval(const IntervalGaussian& g, double t) { return g.pdf(t); }

// ---------------------------------------------------------------------------
// DepthMixture

DepthMixture::DepthMixture(DiscreteDepthPdf weights, std::vector<IntervalGaussian> gaussians, double uncertainty)
    : weights_(std::move(weights)), gaussians_(std::move(gaussians)), uncertainty_(uncertainty) {
  const std::size_t n = weights_.intervals.size();
  if (weights_.mass.size() != n || gaussians_.size() != n)
    throw std::invalid_argument("DepthMixture: component count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (gaussians_[i].lo != weights_.intervals.lo(i) || gaussians_[i].hi != weights_.intervals.hi(i))
      throw std::invalid_argument("DepthMixture: gaussian bounds do not match intervals");
  }
  cumulative_.resize(n + 1);
  cumulative_[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) cumulative_[i + 1] = std::min(1.0, cumulative_[i] + weights_.mass[i]);
  // The weights sum to one up to rounding; pin the end so the CDF never exceeds it.
  cumulative_[n] = 1.0;
}

DepthMixture build_depth_mixture(const DiscreteDepthPdf& weights, std::span<const double> mu_rel,
                                 std::span<const double> sigma_rel) {
  const auto& iv = weights.intervals;
  if (mu_rel.size() != iv.size() || sigma_rel.size() != iv.size())
    throw std::invalid_argument("build_depth_mixture: head outputs do not match interval count");
  std::vector<IntervalGaussian> g;
  g.reserve(iv.size());
  for (std::size_t i = 0; i < iv.size(); ++i) g.push_back(build_interval_gaussian(mu_rel[i], sigma_rel[i], iv.lo(i), iv.hi(i)));
  return DepthMixture(weights, std::move(g));
}

double mixture_pdf_eval(const DepthMixture& m, double t) {
  const std::size_t i = m.intervals().locate(t);
  if (i >= m.intervals().size()) return 0.0;
  return m.weights().mass[i] * m.gaussians()[i].pdf(t);
}

double mixture_cdf_eval(const DepthMixture& m, double t) {
  const auto& iv = m.intervals();
  if (t <= iv.front()) return 0.0;
  if (t >= iv.back()) return 1.0;
  const std::size_t i = iv.locate(t);
  const auto& cum = m.cumulative();
  return std::clamp(cum[i] + m.weights().mass[i] * m.gaussians()[i].cdf(t), cum[i], cum[i + 1]);
}

double mixture_mean(const DepthMixture& m) {
  double e = 0.0;
  for (std::size_t i = 0; i < m.gaussians().size(); ++i) e += m.weights().mass[i] * m.gaussians()[i].mean();
  return e;
}

std::vector<double> inverse_cdf_sample(const DepthMixture& m, std::span<const double> quantiles) {
  const auto& iv = m.intervals();
  const auto& cum = m.cumulative();
  const auto& mass = m.weights().mass;
  const std::size_t n = iv.size();
  std::vector<double> out;
  out.reserve(quantiles.size());
  for (double u : quantiles) {
    if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("inverse_cdf_sample: quantile outside [0,1]");
    if (u <= 0.0) {
      out.push_back(iv.front());
      continue;
    }
    if (u >= 1.0) {
      out.push_back(iv.back());
      continue;
    }
    auto it = std::upper_bound(cum.begin() + 1, cum.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cum.begin()) - 1;
    if (i >= n) {
      // u beyond the accumulated total through rounding: last non-empty bin.
      i = n - 1;
      while (i > 0 && mass[i] <= 0.0) --i;
    }
    const double q = mass[i] > 0.0 ? std::clamp((u - cum[i]) / mass[i], 0.0, 1.0) : 1.0;
    out.push_back(m.gaussians()[i].quantile(q));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> stratified_quantiles(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> u(n);
  for (std::size_t k = 0; k < n; ++k) u[k] = (static_cast<double>(k) + uni(rng)) / static_cast<double>(n);
  return u;
}

DiscreteDepthPdf smooth_discrete_pdf(const DiscreteDepthPdf& pdf, SmoothingMode mode) {
  const std::size_t n = pdf.mass.size();
  if (n < 2) throw std::invalid_argument("smooth_discrete_pdf needs at least two bins");
  const auto& w = pdf.mass;
  auto at = [&](std::ptrdiff_t i) { return w[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, n - 1))]; };
  std::vector<double> out(n);
  if (mode == SmoothingMode::blur3) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::ptrdiff_t>(i);
      out[i] = 0.1 * at(k - 1) + 0.8 * at(k) + 0.1 * at(k + 1);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::ptrdiff_t>(i);
      out[i] = 0.5 * (std::max(at(k - 1), at(k)) + std::max(at(k), at(k + 1)));
    }
  }
  DiscreteDepthPdf smoothed = normalize_to_pdf(out, pdf.intervals);
  smoothed.degenerate = smoothed.degenerate || pdf.degenerate;
  return smoothed;
}

DepthMixture apply_uncertainty(const DepthMixture& m, double u) {
  if (std::isnan(u) || u < 1.0) throw std::invalid_argument("apply_uncertainty: u must be >= 1");
  std::vector<IntervalGaussian> g;
  g.reserve(m.gaussians().size());
  for (const auto& gi : m.gaussians()) g.push_back(gi.widened(u));
  return DepthMixture(m.weights(), std::move(g), m.uncertainty() * u);
}

}  // namespace ddnerf

#include "ddnerf/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddnerf {

void SamplingConfig::validate() const {
  if (n_coarse < 1 || n_fine < 1) throw std::invalid_argument("sample budgets must be at least 1");
  if (!(near < far) || !std::isfinite(near) || !std::isfinite(far))
    throw std::invalid_argument("sampling bounds need near < far");
}

double UncertaintySchedule::value(std::uint64_t step) const {
  const double horizon = decay_fraction * static_cast<double>(total_steps);
  if (!(horizon > 0.0) || static_cast<double>(step) >= horizon) return 1.0;
  const double f = static_cast<double>(step) / horizon;
  return u_start + (1.0 - u_start) * f;
}

RayIntervalSet jitter_partitions(const RayIntervalSet& iv, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const auto src = iv.partitions();
  std::vector<double> t(src.begin(), src.end());
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    const double xi = uni(rng) - 0.5;
    const double gap = xi < 0.0 ? src[i] - src[i - 1] : src[i + 1] - src[i];
    t[i] = src[i] + xi * gap;
  }
  return RayIntervalSet(std::move(t));
}

RayIntervalSet coarse_partition(const Ray& ray, const SamplingConfig& cfg, std::mt19937_64* rng) {
  RayIntervalSet iv = cfg.unbounded ? unbounded_partition(ray, cfg) : RayIntervalSet::uniform(ray.near, ray.far, cfg.n_coarse);
  if (cfg.jitter && rng) return jitter_partitions(iv, *rng);
  return iv;
}

std::optional<double> unit_sphere_exit(const Ray& ray) {
  // |o + t d|^2 = 1 with |d| = 1
  const double b = ray.origin.dot(ray.direction);
  const double c = ray.origin.squaredNorm() - 1.0;
  const double disc = b * b - c;
  if (disc <= 0.0) return std::nullopt;
  return -b + std::sqrt(disc);
}

namespace {

void append_geometric(std::vector<double>& t, double from, double to, std::size_t m) {
  const double ratio = to / from;
  for (std::size_t k = 1; k <= m; ++k) t.push_back(from * std::pow(ratio, static_cast<double>(k) / static_cast<double>(m)));
  t.back() = to;
}

}  // namespace

RayIntervalSet unbounded_partition(const Ray& ray, const SamplingConfig& cfg) {
  const std::size_t n = cfg.n_coarse;
  if (!(ray.near > 0.0) || !(ray.near < ray.far)) throw std::invalid_argument("unbounded partition needs 0 < near < far");
  std::vector<double> t{ray.near};
  const auto exit = unit_sphere_exit(ray);
  if (!exit || *exit <= ray.near || n < 2) {
    append_geometric(t, ray.near, ray.far, n);
    return RayIntervalSet(std::move(t));
  }
  if (*exit >= ray.far) return RayIntervalSet::uniform(ray.near, ray.far, n);
  const std::size_t n_uniform = n / 2;
  const std::size_t n_log = n - n_uniform;
  const double span = *exit - ray.near;
  for (std::size_t k = 1; k <= n_uniform; ++k)
    t.push_back(ray.near + span * static_cast<double>(k) / static_cast<double>(n_uniform));
  t.back() = *exit;
  append_geometric(t, *exit, ray.far, n_log);
  return RayIntervalSet(std::move(t));
}

std::vector<double> sample_piecewise_constant(const DiscreteDepthPdf& pdf, std::span<const double> quantiles) {
  const auto& iv = pdf.intervals;
  const std::size_t n = iv.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + pdf.mass[i];

  std::vector<double> out;
  out.reserve(quantiles.size());
  for (double u : quantiles) {
    if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("sample_piecewise_constant: quantile outside [0,1]");
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
      i = n - 1;
      while (i > 0 && pdf.mass[i] <= 0.0) --i;
    }
    const double q = pdf.mass[i] > 0.0 ? std::clamp((u - cum[i]) / pdf.mass[i], 0.0, 1.0) : 1.0;
    if (q <= 0.0)
      out.push_back(iv.lo(i));
    else if (q >= 1.0)
      out.push_back(iv.hi(i));
    else
      out.push_back(iv.lo(i) + q * (iv.hi(i) - iv.lo(i)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> midpoint_quantiles(std::size_t n) {
  std::vector<double> u(n);
  for (std::size_t k = 0; k < n; ++k) u[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
  return u;
}

RayIntervalSet fine_partitions_from_samples(std::span<const double> samples, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("fine partitions need lo < hi");
  const std::size_t n = samples.size();
  if (n == 0) throw std::invalid_argument("fine partitions need at least one sample");
  if (n == 1) return RayIntervalSet({lo, hi});

  std::vector<double> p(n + 1);
  p[0] = std::max(lo, samples[0] - 0.5 * (samples[1] - samples[0]));
  for (std::size_t k = 1; k < n; ++k) p[k] = 0.5 * (samples[k - 1] + samples[k]);
  p[n] = std::min(hi, samples[n - 1] + 0.5 * (samples[n - 1] - samples[n - 2]));
  for (double& v : p) v = std::clamp(v, lo, hi);

  // Clustered samples collapse boundaries; spread them by a minimal gap.
  const double gap = (hi - lo) * 1e-9;
  for (std::size_t k = 1; k <= n; ++k) p[k] = std::max(p[k], p[k - 1] + gap);
  if (p[n] > hi) {
    p[n] = hi;
    for (std::size_t k = n; k-- > 0;) p[k] = std::min(p[k], p[k + 1] - gap);
  }
  return RayIntervalSet(std::move(p));
}

}  // namespace ddnerf

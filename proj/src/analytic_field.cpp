#include <algorithm>
#include <cmath>

#include "ddnerf/activations.hpp"
#include "ddnerf/radiance_field.hpp"
#include "ddnerf/ray_distribution.hpp"

namespace ddnerf {

double Primitive::signed_distance(const Vec3& p) const {
  switch (kind) {
    case Kind::sphere:
      return (p - center).norm() - radius;
    case Kind::box: {
      const Vec3 q = (p - center).cwiseAbs() - half_extent;
      const double outside = q.cwiseMax(0.0).norm();
      const double inside = std::min(q.maxCoeff(), 0.0);
      return outside + inside;
    }
    case Kind::shell: {
      const double mid = radius + 0.5 * thickness;
      return std::abs((p - center).norm() - mid) - 0.5 * thickness;
    }
  }
  return 0.0;
}

double Primitive::falloff_width() const {
  switch (kind) {
    case Kind::sphere:
      return 0.01 * radius;
    case Kind::box:
      return 0.01 * half_extent.minCoeff();
    case Kind::shell:
      return 0.01 * std::min(radius, thickness);
  }
  return 0.0;
}

double Primitive::occupancy(const Vec3& p) const {
  const double eps = falloff_width();
  const double d = signed_distance(p);
  if (d <= -0.5 * eps) return 1.0;
  if (d >= 0.5 * eps) return 0.0;
  // smoothstep from inside (x = 1) to outside (x = 0)
  const double x = 0.5 - d / eps;
  return x * x * (3.0 - 2.0 * x);
}

Rgb Primitive::color_at(const Vec3& p) const {
  if (pattern_frequency == 0.0) return color;
  const Vec3 q = p - center;
  const double f = pattern_frequency;
  const double b = 0.5 + 0.5 * std::sin(f * q.x()) * std::cos(f * q.y()) * std::cos(f * q.z());
  return (1.0 - b) * color + b * color2;
}

std::pair<double, Rgb> AnalyticField::sample(const Vec3& p) const {
  double total = 0.0;
  Rgb c = Rgb::Zero();
  for (const auto& prim : primitives_) {
    const double occ = prim.occupancy(p);
    if (occ <= 0.0) continue;
    const double d = prim.density * occ;
    total += d;
    c += d * prim.color_at(p);
  }
  if (total > 0.0) c /= total;
  return {total, c};
}

double AnalyticField::density(const Vec3& p) const { return sample(p).first; }

Rgb AnalyticField::color(const Vec3& p) const { return sample(p).second; }

IntervalPrediction AnalyticField::query(const IntervalQuery& q) const {
  constexpr int n = kQuadraturePoints;
  const double h = q.length / n;
  const Vec3 start = q.position - 0.5 * q.length * q.direction;

  IntervalPrediction out;
  double density_sum = 0.0;
  double transmittance = 1.0;
  double w_sum = 0.0, w_first = 0.0, w_second = 0.0;
  Rgb c = Rgb::Zero();
  for (int k = 0; k < n; ++k) {
    const double s = (k + 0.5) / n;
    const auto [d, col] = sample(start + (s * q.length) * q.direction);
    density_sum += d;
    const double alpha = -std::expm1(-d * h);
    const double w = transmittance * alpha;
    transmittance *= 1.0 - alpha;
    w_sum += w;
    w_first += w * s;
    w_second += w * s * s;
    c += w * col;
  }
  out.density = density_sum / n;
  if (w_sum > 0.0) {
    out.color = c / w_sum;
    const double mean = w_first / w_sum;
    const double var = std::max(w_second / w_sum - mean * mean, 0.0);
    out.mu_rel = mean;
    out.sigma_rel = std::max(std::sqrt(var), kSigmaRelMin);
  } else {
    out.mu_rel = 0.5;
    out.sigma_rel = kSigmaRelMin;
  }
  constexpr double kLogitClamp = 1e-12;
  out.mu_raw = logit(std::clamp(out.mu_rel, kLogitClamp, 1.0 - kLogitClamp));
  out.sigma_raw = logit(std::clamp(out.sigma_rel, kLogitClamp, 1.0 - kLogitClamp));
  out.has_distribution = true;
  return out;
}

std::vector<IntervalPrediction> AnalyticField::query(std::span<const IntervalQuery> queries) const {
  std::vector<IntervalPrediction> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(query(q));
  return out;
}

}  // namespace ddnerf

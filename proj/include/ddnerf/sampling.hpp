#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ddnerf/radiance_field.hpp"
#include "ddnerf/ray_distribution.hpp"

namespace ddnerf {

struct Ray {
  Vec3 origin = Vec3::Zero();
  /// Unit direction.
  Vec3 direction = Vec3::UnitZ();
  double near = 0.0;
  double far = 1.0;

  Vec3 at(double t) const { return origin + t * direction; }
};

struct SamplingConfig {
  std::size_t n_coarse = 64;
  std::size_t n_fine = 64;
  double near = 2.0;
  double far = 6.0;
  /// Perturb interior coarse partitions during training.
  bool jitter = true;
  /// Uniform-inside-unit-sphere plus geometric spacing beyond it.
  bool unbounded = false;
  std::uint64_t seed = 0;
  Rgb background = Rgb::Zero();

  /// blur3 for up to 16 coarse samples, max2_blur2 above.
  SmoothingMode smoothing_mode() const { return n_coarse <= 16 ? SmoothingMode::blur3 : SmoothingMode::max2_blur2; }
  /// Throws std::invalid_argument on empty budgets or near >= far.
  void validate() const;
  bool operator==(const SamplingConfig&) const = default;
};

/// Linear decay of the uncertainty factor from u_start to 1 over the first
/// decay_fraction of training, then constant 1.
struct UncertaintySchedule {
  double u_start = 3.0;
  double decay_fraction = 0.5;
  std::uint64_t total_steps = 10000;

  double value(std::uint64_t step) const;
};

/// n uniform intervals between the ray's near and far bounds (or the
/// unbounded layout). With rng set and cfg.jitter, every interior partition
/// moves uniformly within half of its neighbouring spacings.
RayIntervalSet coarse_partition(const Ray& ray, const SamplingConfig& cfg, std::mt19937_64* rng = nullptr);

/// Distance along the ray at which it leaves the unit sphere, if it meets it.
std::optional<double> unit_sphere_exit(const Ray& ray);

/// Half of the intervals uniform on [near, exit], the rest geometric from
/// exit to far: t_k = exit * (far / exit)^(k / m). Rays that miss the unit
/// sphere (or leave it before near) are geometric from near.
RayIntervalSet unbounded_partition(const Ray& ray, const SamplingConfig& cfg);

/// Moves interior partitions by (xi - 1/2) times the adjacent spacing,
/// xi ~ U[0,1). The result stays strictly increasing.
RayIntervalSet jitter_partitions(const RayIntervalSet& iv, std::mt19937_64& rng);

/// Inverse-CDF sampling of a piecewise-constant PDF (the reference sampler
/// without per-interval distributions). Output sorted ascending.
std::vector<double> sample_piecewise_constant(const DiscreteDepthPdf& pdf, std::span<const double> quantiles);

/// Evenly spaced quantiles (k + 1/2) / n used at evaluation time.
std::vector<double> midpoint_quantiles(std::size_t n);

/// Intervals around sorted samples: boundaries at midpoints between
/// neighbours, the outer ones half a spacing beyond the extreme samples and
/// capped to [lo, hi]. Degenerate gaps are spread so the result is strictly
/// increasing. A single sample yields [lo, hi].
RayIntervalSet fine_partitions_from_samples(std::span<const double> samples, double lo, double hi);

}  // namespace ddnerf

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace ddnerf {

/// Smallest relative standard deviation a distribution head may produce.
inline constexpr double kSigmaRelMin = 1e-3;
/// Below this truncation mass an interval falls back to a uniform density.
inline constexpr double kTruncMassMin = 1e-6;

/// Partition of a ray segment into n >= 1 intervals [t_i, t_{i+1}].
class RayIntervalSet {
 public:
  /// Throws std::invalid_argument unless the partitions are finite and
  /// strictly increasing with at least two entries.
  explicit RayIntervalSet(std::vector<double> partitions);

  static RayIntervalSet uniform(double near, double far, std::size_t n);

  std::size_t size() const { return partitions_.size() - 1; }
  std::span<const double> partitions() const { return partitions_; }
  double lo(std::size_t i) const { return partitions_[i]; }
  double hi(std::size_t i) const { return partitions_[i + 1]; }
  double delta(std::size_t i) const { return partitions_[i + 1] - partitions_[i]; }
  double midpoint(std::size_t i) const { return 0.5 * (partitions_[i] + partitions_[i + 1]); }
  double front() const { return partitions_.front(); }
  double back() const { return partitions_.back(); }
  std::vector<double> deltas() const;

  /// Index of the interval containing t using right-open bins with the last
  /// bin closed. Returns size() when t lies outside [front(), back()].
  std::size_t locate(double t) const;

  bool operator==(const RayIntervalSet&) const = default;

 private:
  std::vector<double> partitions_;
};

/// Piecewise-constant probability over the bins of a RayIntervalSet.
struct DiscreteDepthPdf {
  RayIntervalSet intervals;
  std::vector<double> mass;
  /// Set when the source weights were all zero and the uniform PDF was substituted.
  bool degenerate = false;
};

/// Normalizes non-negative weights into a discrete PDF. All-zero input yields
/// the uniform PDF with degenerate = true.
DiscreteDepthPdf normalize_to_pdf(std::span<const double> weights, const RayIntervalSet& intervals);

/// Partial derivatives of a within-interval CDF value.
struct CdfGradient {
  double d_mu = 0.0;
  double d_sigma = 0.0;
};

/// Gaussian restricted to a single interval and renormalized by its
/// truncation mass. Degenerates to the uniform density when the mass inside
/// the interval underflows or sigma is infinite.
struct IntervalGaussian {
  double mu_rel = 0.5;
  double sigma_rel = kSigmaRelMin;
  double lo = 0.0;
  double hi = 1.0;
  double mu_abs = 0.5;
  double sigma_abs = kSigmaRelMin;
  double trunc_mass = 1.0;
  bool uniform = false;

  double pdf(double t) const;
  /// Within-interval CDF: 0 at lo, 1 at hi.
  double cdf(double t) const;
  /// Probability of [a, b] clipped to the interval, without the
  /// cancellation of cdf(b) - cdf(a) in the tails.
  double mass(double a, double b) const;
  /// Inverse of cdf for q in [0, 1].
  double quantile(double q) const;
  double mean() const;
  /// d cdf(t) / d(mu_abs, sigma_abs); zero for the uniform fallback.
  CdfGradient cdf_gradient(double t) const;

  /// Same relative mean with sigma_abs multiplied by factor (>= 1, may be
  /// infinite) and the truncation mass recomputed.
  IntervalGaussian widened(double factor) const;
};

/// Maps relative parameters in [0,1] onto [t_lo, t_hi]; sigma_rel is floored
/// at kSigmaRelMin. Throws std::invalid_argument on non-finite input,
/// mu_rel outside [0,1], non-positive sigma_rel or t_lo >= t_hi.
IntervalGaussian build_interval_gaussian(double mu_rel, double sigma_rel, double t_lo, double t_hi);

double truncated_pdf_eval(const IntervalGaussian& g, double t);

/// Mixture of per-interval truncated Gaussians weighted by a discrete PDF.
class DepthMixture {
 public:
  DepthMixture(DiscreteDepthPdf weights, std::vector<IntervalGaussian> gaussians, double uncertainty = 1.0);

  const RayIntervalSet& intervals() const { return weights_.intervals; }
  const DiscreteDepthPdf& weights() const { return weights_; }
  const std::vector<IntervalGaussian>& gaussians() const { return gaussians_; }
  double uncertainty() const { return uncertainty_; }
  /// cumulative()[i] = sum of weights before interval i; size n + 1.
  const std::vector<double>& cumulative() const { return cumulative_; }

 private:
  DiscreteDepthPdf weights_;
  std::vector<IntervalGaussian> gaussians_;
  double uncertainty_;
  std::vector<double> cumulative_;
};

/// Builds the mixture from weights and relative head outputs per interval.
DepthMixture build_depth_mixture(const DiscreteDepthPdf& weights, std::span<const double> mu_rel,
                                 std::span<const double> sigma_rel);

double mixture_pdf_eval(const DepthMixture& m, double t);
double mixture_cdf_eval(const DepthMixture& m, double t);
double mixture_mean(const DepthMixture& m);

/// Inverse-CDF sampling of the mixture. Quantiles must lie in [0,1]
/// (std::invalid_argument otherwise); the result is sorted ascending.
std::vector<double> inverse_cdf_sample(const DepthMixture& m, std::span<const double> quantiles);

/// Stratified quantiles (k + xi_k) / n with xi_k ~ U[0,1).
std::vector<double> stratified_quantiles(std::size_t n, std::mt19937_64& rng);

enum class SmoothingMode { blur3, max2_blur2 };

/// Smooths a discrete PDF (n >= 2). blur3 convolves with [0.1, 0.8, 0.1];
/// max2_blur2 applies a 2-tap max then a 2-tap box blur. Edges are
/// replicated and the result renormalized.
DiscreteDepthPdf smooth_discrete_pdf(const DiscreteDepthPdf& pdf, SmoothingMode mode);

/// Multiplies every sigma_abs by u >= 1 (u may be +inf, which makes every
/// interval uniform). Throws std::invalid_argument for u < 1 or NaN.
DepthMixture apply_uncertainty(const DepthMixture& m, double u);

}  // namespace ddnerf

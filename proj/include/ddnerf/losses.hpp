#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddnerf/ray_distribution.hpp"
#include "ddnerf/volume_rendering.hpp"

namespace ddnerf {

/// Argument order of the KL term in the distribution-estimation loss.
enum class KlDirection {
  /// KL(estimate || target): sum est * log(est / target).
  estimate_first,
  /// KL(target || estimate): sum target * log(target / est).
  target_first,
};

struct LossConfig {
  double lambda_de = 0.1;
  double lambda_mu = 0.1;
  double lambda_sigma = 0.1;
  double kl_epsilon = 1e-8;
  KlDirection kl_direction = KlDirection::target_first;
  /// Let the DE gradient reach the coarse density through h^c (otherwise
  /// only the distribution heads receive it).
  bool de_through_weights = true;

  /// Regularizer weights 0.8 / n clamped into [0.01, 0.1].
  static LossConfig defaults_for(std::size_t n_coarse);
  /// Throws std::invalid_argument if any coefficient is negative.
  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

struct LossReport {
  double photometric_coarse = 0.0;
  double photometric_fine = 0.0;
  double kl_term = 0.0;
  double mu_reg = 0.0;
  double sigma_reg = 0.0;
  double total = 0.0;

  bool operator==(const LossReport&) const = default;
};

std::string loss_csv_header();
/// Fixed column order, values printed with round-trip precision.
std::string loss_csv_row(std::uint64_t step, const LossReport& r);

/// Squared error between two colors.
double squared_error(const Rgb& a, const Rgb& b);

/// Mean over rays of |C - C_fine|^2 + |C - C_coarse|^2. Throws on an empty
/// batch or mismatched lengths.
double photometric_loss(std::span<const Rgb> gt, std::span<const Rgb> coarse, std::span<const Rgb> fine);

/// Probability mass the mixture assigns to each fine bin, renormalized over
/// the covered range. Throws std::invalid_argument when the fine partitions
/// leave the mixture support.
DiscreteDepthPdf estimate_fine_hist(const DepthMixture& m, const RayIntervalSet& fine_partitions);

/// Floors every bin at epsilon and renormalizes.
std::vector<double> floor_and_renormalize(std::span<const double> mass, double epsilon);

/// sum_i p_i log(p_i / q_i) in nats with 0 log 0 = 0; q is floored at
/// epsilon and renormalized first. Throws when the bin counts differ.
double kl_divergence(const DiscreteDepthPdf& p, const DiscreteDepthPdf& q, double epsilon = 1e-8);

struct DeLossValue {
  double value = 0.0;
  double kl = 0.0;
  double mu_reg = 0.0;
  double sigma_reg = 0.0;
};

/// KL between the fine histogram and its mixture estimate (direction per
/// cfg, estimate floored at cfg.kl_epsilon) plus
/// (1/n) (lambda_mu sum mu_raw^2 + lambda_sigma sum sigma_raw^2).
DeLossValue de_loss(const DiscreteDepthPdf& h_fine, const DiscreteDepthPdf& h_fine_est, std::span<const double> mu_raw,
                    std::span<const double> sigma_raw, const LossConfig& cfg);

/// L_nerf + lambda_de * DE.
double total_loss(double nerf_loss, double de, const LossConfig& cfg);

struct DeGradient {
  DeLossValue loss;
  /// Estimated fine histogram after renormalization and flooring.
  std::vector<double> estimate;
  /// dDE / dh^c for the (unsmoothed) coarse histogram.
  std::vector<double> d_coarse_mass;
  std::vector<double> d_mu_raw;
  std::vector<double> d_sigma_raw;
};

/// Evaluates the distribution-estimation loss starting from the coarse
/// histogram and the raw (pre-sigmoid) head outputs, and returns its
/// gradient. The fine histogram is a constant target.
DeGradient de_loss_with_gradient(const DiscreteDepthPdf& h_coarse, std::span<const double> mu_raw,
                                 std::span<const double> sigma_raw, const RayIntervalSet& fine_partitions,
                                 const DiscreteDepthPdf& h_fine, const LossConfig& cfg);

}  // namespace ddnerf

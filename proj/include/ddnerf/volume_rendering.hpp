#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "ddnerf/ray_distribution.hpp"

namespace ddnerf {

using Rgb = Eigen::Vector3d;

/// Per-interval densities and colors along one ray.
struct DensitySamples {
  RayIntervalSet intervals;
  std::vector<double> densities;
  std::vector<Rgb> colors;
};

struct CompositeResult {
  /// Output color, clamped to [0,1].
  Rgb pixel_color = Rgb::Zero();
  /// Unclamped color including the background residual; losses use this.
  Rgb raw_color = Rgb::Zero();
  std::vector<double> alphas;
  std::vector<double> weights;
  double accumulated_opacity = 0.0;
  /// Expected depth of the normalized weights, or the far bound when the
  /// ray accumulated no weight at all.
  double expected_depth = 0.0;
  bool empty = true;
};

/// alpha = 1 - exp(-sigma * delta). Throws std::invalid_argument for
/// negative sigma or non-positive delta.
double opacity_from_density(double sigma, double delta);

/// w_i = alpha_i * prod_{j<i} (1 - alpha_j).
std::vector<double> compositing_weights(std::span<const double> alphas);

/// sum_i w_i c_i plus (1 - sum_i w_i) * background, clamped per channel.
Rgb composite_color(std::span<const double> weights, std::span<const Rgb> colors, const Rgb& background = Rgb::Zero());

/// Mean of a discrete PDF using bin midpoints.
double expected_depth_discrete(const DiscreteDepthPdf& pdf);

/// Mean of the truncated-Gaussian mixture (closed form per component).
double expected_depth_mixture(const DepthMixture& m);

/// Full compositing of one ray.
CompositeResult composite(const DensitySamples& samples, const Rgb& background = Rgb::Zero());

struct CompositeGradient {
  std::vector<double> d_density;
  std::vector<Rgb> d_color;
};

/// Reverse-mode gradient of a scalar loss through composite(). d_raw_color is
/// dL/d(raw_color); d_weights adds direct dependencies of the loss on the
/// compositing weights (may be empty).
CompositeGradient composite_backward(const DensitySamples& samples, const CompositeResult& result, const Rgb& d_raw_color,
                                     std::span<const double> d_weights, const Rgb& background = Rgb::Zero());

}  // namespace ddnerf

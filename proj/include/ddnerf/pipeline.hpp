#pragma once

#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ddnerf/losses.hpp"
#include "ddnerf/radiance_field.hpp"
#include "ddnerf/sampling.hpp"
#include "ddnerf/volume_rendering.hpp"

namespace ddnerf {

/// Batched field evaluation used by the pipeline passes.
using FieldFn = std::function<std::vector<IntervalPrediction>(std::span<const IntervalQuery>)>;

FieldFn field_fn(const FieldNetwork& net);
FieldFn field_fn(const AnalyticField& field);

enum class SamplerKind {
  /// Inverse-CDF sampling of the truncated-Gaussian mixture.
  mixture,
  /// Piecewise-constant sampling of the coarse histogram.
  piecewise_constant,
};

struct PassOptions {
  /// Training mode jitters coarse partitions, smooths the sampling
  /// histogram and draws stratified quantiles. Evaluation uses exact
  /// partitions, the raw histogram and midpoint quantiles.
  bool training = false;
  /// Factor applied to the sampling mixture's standard deviations.
  double uncertainty = 1.0;
  SamplerKind sampler = SamplerKind::mixture;
  /// Replace the predicted relative parameters (ignored heads).
  std::optional<double> forced_mu_rel;
  std::optional<double> forced_sigma_rel;
};

std::vector<IntervalQuery> interval_queries(const Ray& ray, const RayIntervalSet& iv);

struct CoarseRay {
  DensitySamples samples;
  std::vector<IntervalPrediction> predictions;
  CompositeResult composite;
  /// Normalized coarse weights before any smoothing.
  DiscreteDepthPdf h_coarse;
  /// Histogram the fine samples are drawn from (smoothed in training).
  DiscreteDepthPdf h_sampling;
  /// Mixture over h_sampling with the pass's uncertainty factor; absent for
  /// the piecewise-constant sampler.
  std::optional<DepthMixture> sampling_mixture;
  /// Mixture over the unsmoothed h_coarse with u = 1; absent without
  /// distribution parameters.
  std::optional<DepthMixture> mixture;
};

struct FineRay {
  std::vector<double> sample_depths;
  DensitySamples samples;
  std::vector<IntervalPrediction> predictions;
  CompositeResult composite;
  DiscreteDepthPdf h_fine;
};

/// Partitions every ray, queries the coarse field once for the whole batch,
/// composites, and builds the per-ray sampling distributions.
std::vector<CoarseRay> run_coarse(std::span<const Ray> rays, const FieldFn& coarse, const SamplingConfig& cfg,
                                  const PassOptions& opts, std::mt19937_64& rng);

/// Draws cfg.n_fine samples per ray from the coarse pass, forms fine
/// intervals around them and composites the fine field.
std::vector<FineRay> run_fine(std::span<const Ray> rays, std::span<const CoarseRay> coarse, const FieldFn& fine,
                              const SamplingConfig& cfg, const PassOptions& opts, std::mt19937_64& rng);

/// Samples drawn from one coarse ray (sorted).
std::vector<double> draw_fine_samples(const CoarseRay& c, std::size_t n, const PassOptions& opts, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Per-ray losses over raw network outputs

struct RayLoss {
  double photometric = 0.0;
  DeLossValue de;
  /// dL/d(main outputs), 4 x n.
  Eigen::MatrixXd d_main;
  /// dL/d(distribution outputs), 2 x n; empty when the DE term is off.
  Eigen::MatrixXd d_distribution;
};

/// |C - C_hat|^2 for the coarse model plus lambda_de * DE when the
/// distribution outputs and a fine target are supplied. main is 4 x n
/// (color logits, density pre-activation), distribution 2 x n (mu_raw,
/// sigma_raw). The fine target is a constant.
RayLoss coarse_ray_loss(const RayIntervalSet& iv, const Eigen::MatrixXd& main, const Eigen::MatrixXd* distribution,
                        const Rgb& gt, const RayIntervalSet* fine_partitions, const DiscreteDepthPdf* h_fine,
                        const LossConfig& cfg, const Rgb& background, bool with_gradient = true);

/// |C - C_hat|^2 for the fine model.
RayLoss fine_ray_loss(const RayIntervalSet& iv, const Eigen::MatrixXd& main, const Rgb& gt, const Rgb& background,
                      bool with_gradient = true);

// ---------------------------------------------------------------------------
// Rendering

struct RayRender {
  Rgb coarse_color = Rgb::Zero();
  Rgb fine_color = Rgb::Zero();
  /// E[h^c], E[f_dd] (equal to E[h^c] without distribution parameters) and
  /// E[h^f]; far when the ray accumulated no weight.
  double depth_coarse_discrete = 0.0;
  double depth_coarse_mixture = 0.0;
  double depth_fine = 0.0;
};

/// Evaluation-mode pipeline over a batch of rays, split into chunks that run
/// on worker threads. Output order follows the input.
std::vector<RayRender> render_rays(std::span<const Ray> rays, const FieldFn& coarse, const FieldFn& fine,
                                   const SamplingConfig& cfg, const PassOptions& opts);

}  // namespace ddnerf

#include "ddnerf/volume_rendering.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddnerf {

double opacity_from_density(double sigma, double delta) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("opacity_from_density: negative density");
  if (!(delta > 0.0)) throw std::invalid_argument("opacity_from_density: non-positive interval length");
  return -std::expm1(-sigma * delta);
}

std::vector<double> compositing_weights(std::span<const double> alphas) {
  std::vector<double> w(alphas.size());
  double transmittance = 1.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    w[i] = alphas[i] * transmittance;
    transmittance *= 1.0 - alphas[i];
  }
  return w;
}

namespace {

Rgb composite_raw(std::span<const double> weights, std::span<const Rgb> colors, const Rgb& background) {
  if (weights.size() != colors.size()) throw std::invalid_argument("composite_color: length mismatch");
  Rgb c = Rgb::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    c += weights[i] * colors[i];
    total += weights[i];
  }
  return c + (1.0 - total) * background;
}

}  // namespace

Rgb composite_color(std::span<const double> weights, std::span<const Rgb> colors, const Rgb& background) {
  return composite_raw(weights, colors, background).cwiseMax(0.0).cwiseMin(1.0);
}

double expected_depth_discrete(const DiscreteDepthPdf& pdf) {
  double e = 0.0;
  for (std::size_t i = 0; i < pdf.mass.size(); ++i) e += pdf.mass[i] * pdf.intervals.midpoint(i);
  return e;
}

double expected_depth_mixture(const DepthMixture& m) { return mixture_mean(m); }

CompositeResult composite(const DensitySamples& samples, const Rgb& background) {
  const auto& iv = samples.intervals;
  if (samples.densities.size() != iv.size() || samples.colors.size() != iv.size())
    throw std::invalid_argument("composite: sample count does not match interval count");
  CompositeResult r;
  r.alphas.resize(iv.size());
  for (std::size_t i = 0; i < iv.size(); ++i) r.alphas[i] = opacity_from_density(samples.densities[i], iv.delta(i));
  r.weights = compositing_weights(r.alphas);
  r.raw_color = composite_raw(r.weights, samples.colors, background);
  r.pixel_color = r.raw_color.cwiseMax(0.0).cwiseMin(1.0);
  r.accumulated_opacity = 0.0;
  for (double w : r.weights) r.accumulated_opacity += w;
  const DiscreteDepthPdf pdf = normalize_to_pdf(r.weights, iv);
  r.empty = pdf.degenerate;
  r.expected_depth = r.empty ? iv.back() : expected_depth_discrete(pdf);
  return r;
}

CompositeGradient composite_backward(const DensitySamples& samples, const CompositeResult& result, const Rgb& d_raw_color,
                                     std::span<const double> d_weights, const Rgb& background) {
  const auto& iv = samples.intervals;
  const std::size_t n = iv.size();
  if (!d_weights.empty() && d_weights.size() != n) throw std::invalid_argument("composite_backward: d_weights length");
  CompositeGradient g;
  g.d_density.assign(n, 0.0);
  g.d_color.assign(n, Rgb::Zero());

  std::vector<double> d_w(n);
  for (std::size_t i = 0; i < n; ++i) {
    d_w[i] = d_raw_color.dot(samples.colors[i]) + (d_weights.empty() ? 0.0 : d_weights[i]);
    g.d_color[i] = result.weights[i] * d_raw_color;
  }

  // The background residual behaves like a final fully opaque sample, so the
  // suffix accumulator starts from its contribution. With
  // R_k = g_k a_k + (1 - a_k) R_{k+1}, dL/da_k = T_k (g_k - R_{k+1}).
  std::vector<double> transmittance(n);
  double t = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    transmittance[i] = t;
    t *= 1.0 - result.alphas[i];
  }
  double suffix = d_raw_color.dot(background);
  for (std::size_t k = n; k-- > 0;) {
    const double a = result.alphas[k];
    const double d_alpha = transmittance[k] * (d_w[k] - suffix);
    g.d_density[k] = d_alpha * iv.delta(k) * (1.0 - a);
    suffix = d_w[k] * a + (1.0 - a) * suffix;
  }
  return g;
}

}  // namespace ddnerf

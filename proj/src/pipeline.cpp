#include "ddnerf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ddnerf/activations.hpp"
#include "ddnerf/parallel.hpp"

namespace ddnerf {

FieldFn field_fn(const FieldNetwork& net) {
  return [&net](std::span<const IntervalQuery> q) { return net.query(q); };
}

FieldFn field_fn(const AnalyticField& field) {
  return [&field](std::span<const IntervalQuery> q) { return field.query(q); };
}

std::vector<IntervalQuery> interval_queries(const Ray& ray, const RayIntervalSet& iv) {
  std::vector<IntervalQuery> q(iv.size());
  for (std::size_t i = 0; i < iv.size(); ++i) {
    q[i].position = ray.at(iv.midpoint(i));
    q[i].direction = ray.direction;
    q[i].length = iv.delta(i);
  }
  return q;
}

namespace {

DensitySamples to_samples(const RayIntervalSet& iv, std::span<const IntervalPrediction> p) {
  DensitySamples s{iv, std::vector<double>(p.size()), std::vector<Rgb>(p.size())};
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.densities[i] = p[i].density;
    s.colors[i] = p[i].color;
  }
  return s;
}

// Queries every interval set in one batched field call.
std::vector<std::vector<IntervalPrediction>> query_batch(std::span<const Ray> rays,
                                                         const std::vector<RayIntervalSet>& sets, const FieldFn& fn) {
  std::vector<IntervalQuery> all;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    auto q = interval_queries(rays[r], sets[r]);
    all.insert(all.end(), q.begin(), q.end());
  }
  const auto pred = fn(all);
  if (pred.size() != all.size()) throw std::logic_error("field returned the wrong number of predictions");
  std::vector<std::vector<IntervalPrediction>> out(rays.size());
  std::size_t offset = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    out[r].assign(pred.begin() + static_cast<std::ptrdiff_t>(offset),
                  pred.begin() + static_cast<std::ptrdiff_t>(offset + sets[r].size()));
    offset += sets[r].size();
  }
  return out;
}

}  // namespace

std::vector<CoarseRay> run_coarse(std::span<const Ray> rays, const FieldFn& coarse, const SamplingConfig& cfg,
                                  const PassOptions& opts, std::mt19937_64& rng) {
  std::vector<RayIntervalSet> sets;
  sets.reserve(rays.size());
  for (const auto& ray : rays) sets.push_back(coarse_partition(ray, cfg, opts.training ? &rng : nullptr));
  const auto pred = query_batch(rays, sets, coarse);

  std::vector<CoarseRay> out;
  out.reserve(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto& iv = sets[r];
    const auto& p = pred[r];
    DensitySamples samples = to_samples(iv, p);
    CompositeResult comp = composite(samples, cfg.background);
    DiscreteDepthPdf h = normalize_to_pdf(comp.weights, iv);
    DiscreteDepthPdf h_sampling = opts.training && iv.size() >= 2 ? smooth_discrete_pdf(h, cfg.smoothing_mode()) : h;

    const bool heads = !p.empty() && p.front().has_distribution;
    const bool have_params = (heads || opts.forced_mu_rel) && (heads || opts.forced_sigma_rel);
    std::optional<DepthMixture> mixture, sampling_mixture;
    if (have_params) {
      std::vector<double> mu(p.size()), sigma(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        mu[i] = opts.forced_mu_rel ? *opts.forced_mu_rel : p[i].mu_rel;
        sigma[i] = opts.forced_sigma_rel ? *opts.forced_sigma_rel : p[i].sigma_rel;
      }
      mixture = build_depth_mixture(h, mu, sigma);
      if (opts.sampler == SamplerKind::mixture) {
        sampling_mixture = apply_uncertainty(build_depth_mixture(h_sampling, mu, sigma), opts.uncertainty);
      }
    } else if (opts.sampler == SamplerKind::mixture) {
      throw std::invalid_argument("mixture sampling needs distribution outputs or forced parameters");
    }
    out.push_back(CoarseRay{std::move(samples), p, std::move(comp), std::move(h), std::move(h_sampling),
                            std::move(sampling_mixture), std::move(mixture)});
  }
  return out;
}

std::vector<double> draw_fine_samples(const CoarseRay& c, std::size_t n, const PassOptions& opts, std::mt19937_64& rng) {
  const auto u = opts.training ? stratified_quantiles(n, rng) : midpoint_quantiles(n);
  if (opts.sampler == SamplerKind::mixture) {
    if (!c.sampling_mixture) throw std::logic_error("coarse pass built no sampling mixture");
    return inverse_cdf_sample(*c.sampling_mixture, u);
  }
  return sample_piecewise_constant(c.h_sampling, u);
}

std::vector<FineRay> run_fine(std::span<const Ray> rays, std::span<const CoarseRay> coarse, const FieldFn& fine,
                              const SamplingConfig& cfg, const PassOptions& opts, std::mt19937_64& rng) {
  if (coarse.size() != rays.size()) throw std::invalid_argument("run_fine: coarse results do not match rays");
  std::vector<std::vector<double>> depths;
  std::vector<RayIntervalSet> sets;
  depths.reserve(rays.size());
  sets.reserve(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    depths.push_back(draw_fine_samples(coarse[r], cfg.n_fine, opts, rng));
    const auto& iv = coarse[r].samples.intervals;
    sets.push_back(fine_partitions_from_samples(depths.back(), iv.front(), iv.back()));
  }
  const auto pred = query_batch(rays, sets, fine);

  std::vector<FineRay> out;
  out.reserve(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    DensitySamples samples = to_samples(sets[r], pred[r]);
    CompositeResult comp = composite(samples, cfg.background);
    DiscreteDepthPdf h = normalize_to_pdf(comp.weights, sets[r]);
    out.push_back(FineRay{std::move(depths[r]), std::move(samples), pred[r], std::move(comp), std::move(h)});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct RawForward {
  DensitySamples samples;
  CompositeResult result;
  std::vector<double> color_sig;  // 3n sigmoid outputs
};

RawForward raw_forward(const RayIntervalSet& iv, const Eigen::MatrixXd& main, const Rgb& background) {
  const std::size_t n = iv.size();
  if (main.rows() != 4 || static_cast<std::size_t>(main.cols()) != n)
    throw std::invalid_argument("ray loss: output matrix does not match interval count");
  RawForward f{DensitySamples{iv, std::vector<double>(n), std::vector<Rgb>(n)}, {}, std::vector<double>(3 * n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    for (int c = 0; c < 3; ++c) {
      const double s = sigmoid(main(c, col));
      f.color_sig[3 * i + c] = s;
      f.samples.colors[i][c] = s;
    }
    f.samples.densities[i] = softplus(main(kDensityRow, col));
  }
  f.result = composite(f.samples, background);
  return f;
}

void fill_main_gradient(const RawForward& f, const Eigen::MatrixXd& main, const CompositeGradient& g,
                        Eigen::MatrixXd& d_main) {
  const std::size_t n = f.samples.densities.size();
  d_main.resize(4, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    for (int c = 0; c < 3; ++c) {
      const double s = f.color_sig[3 * i + c];
      d_main(c, col) = g.d_color[i][c] * s * (1.0 - s);
    }
    d_main(kDensityRow, col) = g.d_density[i] * sigmoid(main(kDensityRow, col));
  }
}

}  // namespace

RayLoss coarse_ray_loss(const RayIntervalSet& iv, const Eigen::MatrixXd& main, const Eigen::MatrixXd* distribution,
                        const Rgb& gt, const RayIntervalSet* fine_partitions, const DiscreteDepthPdf* h_fine,
                        const LossConfig& cfg, const Rgb& background, bool with_gradient) {
  const std::size_t n = iv.size();
  const RawForward f = raw_forward(iv, main, background);
  RayLoss out;
  const Rgb diff = f.result.raw_color - gt;
  out.photometric = diff.squaredNorm();

  const bool de_on = distribution && fine_partitions && h_fine && cfg.lambda_de > 0.0;
  std::vector<double> d_weights;
  if (de_on) {
    if (distribution->rows() != 2 || static_cast<std::size_t>(distribution->cols()) != n)
      throw std::invalid_argument("ray loss: distribution matrix does not match interval count");
    std::vector<double> mu_raw(n), sigma_raw(n);
    for (std::size_t i = 0; i < n; ++i) {
      mu_raw[i] = (*distribution)(0, static_cast<Eigen::Index>(i));
      sigma_raw[i] = (*distribution)(1, static_cast<Eigen::Index>(i));
    }
    const DiscreteDepthPdf h = normalize_to_pdf(f.result.weights, iv);
    const DeGradient de = de_loss_with_gradient(h, mu_raw, sigma_raw, *fine_partitions, *h_fine, cfg);
    out.de = de.loss;
    if (with_gradient) {
      out.d_distribution.resize(2, static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        out.d_distribution(0, static_cast<Eigen::Index>(i)) = cfg.lambda_de * de.d_mu_raw[i];
        out.d_distribution(1, static_cast<Eigen::Index>(i)) = cfg.lambda_de * de.d_sigma_raw[i];
      }
      if (!h.degenerate && cfg.de_through_weights) {
        // h = w / S
        double total = 0.0, proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          total += f.result.weights[i];
          proj += de.d_coarse_mass[i] * h.mass[i];
        }
        d_weights.resize(n);
        for (std::size_t i = 0; i < n; ++i) d_weights[i] = cfg.lambda_de * (de.d_coarse_mass[i] - proj) / total;
      }
    }
  }
  if (with_gradient) {
    const auto g = composite_backward(f.samples, f.result, 2.0 * diff, d_weights, background);
    fill_main_gradient(f, main, g, out.d_main);
  }
  return out;
}

RayLoss fine_ray_loss(const RayIntervalSet& iv, const Eigen::MatrixXd& main, const Rgb& gt, const Rgb& background,
                      bool with_gradient) {
  const RawForward f = raw_forward(iv, main, background);
  RayLoss out;
  const Rgb diff = f.result.raw_color - gt;
  out.photometric = diff.squaredNorm();
  if (with_gradient) {
    const auto g = composite_backward(f.samples, f.result, 2.0 * diff, {}, background);
    fill_main_gradient(f, main, g, out.d_main);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<RayRender> render_rays(std::span<const Ray> rays, const FieldFn& coarse, const FieldFn& fine,
                                   const SamplingConfig& cfg, const PassOptions& opts) {
  PassOptions eval = opts;
  eval.training = false;
  constexpr std::size_t kChunk = 512;
  const std::size_t chunks = (rays.size() + kChunk - 1) / kChunk;
  std::vector<RayRender> out(rays.size());
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(rays.size(), begin + kChunk);
    const auto batch = rays.subspan(begin, end - begin);
    std::mt19937_64 unused(0);
    const auto cr = run_coarse(batch, coarse, cfg, eval, unused);
    const auto fr = run_fine(batch, cr, fine, cfg, eval, unused);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      RayRender& o = out[begin + r];
      const double far = cr[r].samples.intervals.back();
      o.coarse_color = cr[r].composite.pixel_color;
      o.fine_color = fr[r].composite.pixel_color;
      o.depth_coarse_discrete = cr[r].h_coarse.degenerate ? far : expected_depth_discrete(cr[r].h_coarse);
      o.depth_coarse_mixture = cr[r].h_coarse.degenerate ? far
                               : cr[r].mixture           ? expected_depth_mixture(*cr[r].mixture)
                                                         : o.depth_coarse_discrete;
      o.depth_fine = fr[r].h_fine.degenerate ? far : expected_depth_discrete(fr[r].h_fine);
    }
  });
  return out;
}

}  // namespace ddnerf

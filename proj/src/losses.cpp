#include "ddnerf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "ddnerf/activations.hpp"

namespace ddnerf {

LossConfig LossConfig::defaults_for(std::size_t n_coarse) {
  LossConfig cfg;
  const double reg = std::clamp(0.8 / static_cast<double>(std::max<std::size_t>(n_coarse, 1)), 0.01, 0.1);
  cfg.lambda_mu = reg;
  cfg.lambda_sigma = reg;
  return cfg;
}

void LossConfig::validate() const {
  if (!(lambda_de >= 0.0) || !(lambda_mu >= 0.0) || !(lambda_sigma >= 0.0) || !(kl_epsilon >= 0.0))
    throw std::invalid_argument("loss coefficients must be non-negative");
}

std::string loss_csv_header() { return "step,total,photometric_coarse,photometric_fine,kl,mu_reg,sigma_reg"; }

std::string loss_csv_row(std::uint64_t step, const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<unsigned long long>(step),
                r.total, r.photometric_coarse, r.photometric_fine, r.kl_term, r.mu_reg, r.sigma_reg);
  return buf;
}

double squared_error(const Rgb& a, const Rgb& b) { return (a - b).squaredNorm(); }

double photometric_loss(std::span<const Rgb> gt, std::span<const Rgb> coarse, std::span<const Rgb> fine) {
  if (gt.empty()) throw std::invalid_argument("photometric_loss: empty ray batch");
  if (coarse.size() != gt.size() || fine.size() != gt.size())
    throw std::invalid_argument("photometric_loss: batch size mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < gt.size(); ++r) total += squared_error(gt[r], fine[r]) + squared_error(gt[r], coarse[r]);
  return total / static_cast<double>(gt.size());
}

std::vector<double> floor_and_renormalize(std::span<const double> mass, double epsilon) {
  std::vector<double> out(mass.begin(), mass.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::max(v, epsilon);
    total += v;
  }
  if (total > 0.0)
    for (double& v : out) v /= total;
  return out;
}

namespace {

void check_fine_partitions(const RayIntervalSet& coarse, const RayIntervalSet& fine) {
  if (fine.front() < coarse.front() || fine.back() > coarse.back())
    throw std::invalid_argument("fine partitions extend beyond the mixture support");
}

// Mixture CDF at every fine partition, written as cum[i] + h_i G_i(t) so
// that the value and its gradient come from the same expression.
struct CdfAtPartitions {
  std::vector<double> value;
  std::vector<std::size_t> bin;
  std::vector<double> within;
};

CdfAtPartitions cdf_at_partitions(const DepthMixture& m, const RayIntervalSet& fine) {
  const auto pts = fine.partitions();
  CdfAtPartitions c;
  c.value.resize(pts.size());
  c.bin.resize(pts.size());
  c.within.resize(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const std::size_t i = m.intervals().locate(pts[k]);
    c.bin[k] = i;
    c.within[k] = m.gaussians()[i].cdf(pts[k]);
    c.value[k] = m.cumulative()[i] + m.weights().mass[i] * c.within[k];
  }
  return c;
}

// Renormalized fine-bin masses; empty when the covered mass vanishes. Each
// bin is summed from per-interval masses so tail bins keep their relative
// precision.
std::vector<double> covered_masses(const DepthMixture& m, const RayIntervalSet& fine, double& covered) {
  const auto& iv = m.intervals();
  const auto& w = m.weights().mass;
  std::vector<double> e(fine.size());
  covered = 0.0;
  for (std::size_t j = 0; j < fine.size(); ++j) {
    const double a = fine.lo(j), b = fine.hi(j);
    const std::size_t ia = iv.locate(a), ib = iv.locate(b);
    double raw = 0.0;
    for (std::size_t i = ia; i <= ib; ++i) {
      if (w[i] == 0.0) continue;
      raw += w[i] * (i == ia || i == ib ? m.gaussians()[i].mass(a, b) : 1.0);
    }
    e[j] = raw;
    covered += raw;
  }
  if (!(covered > 0.0)) return {};
  for (auto& v : e) v /= covered;
  return e;
}

double kl_terms(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

// KL for the configured direction given the already floored estimate.
// Optionally fills dKL/d(estimate).
double directed_kl(std::span<const double> estimate, std::span<const double> target, const LossConfig& cfg,
                   std::vector<double>* d_estimate) {
  if (cfg.kl_direction == KlDirection::estimate_first) {
    const auto q = floor_and_renormalize(target, cfg.kl_epsilon);
    if (d_estimate) {
      d_estimate->resize(estimate.size());
      for (std::size_t i = 0; i < estimate.size(); ++i)
        (*d_estimate)[i] = estimate[i] > 0.0 ? std::log(estimate[i] / q[i]) + 1.0 : 0.0;
    }
    return kl_terms(estimate, q);
  }
  if (d_estimate) {
    d_estimate->resize(estimate.size());
    for (std::size_t i = 0; i < estimate.size(); ++i) (*d_estimate)[i] = -target[i] / estimate[i];
  }
  return kl_terms(target, estimate);
}

void regularizers(std::span<const double> mu_raw, std::span<const double> sigma_raw, const LossConfig& cfg,
                  DeLossValue& v) {
  if (mu_raw.size() != sigma_raw.size()) throw std::invalid_argument("de_loss: raw parameter lengths differ");
  const double n = static_cast<double>(std::max<std::size_t>(mu_raw.size(), 1));
  double smu = 0.0, ssig = 0.0;
  for (double x : mu_raw) smu += x * x;
  for (double x : sigma_raw) ssig += x * x;
  v.mu_reg = cfg.lambda_mu * smu / n;
  v.sigma_reg = cfg.lambda_sigma * ssig / n;
}

}  // namespace

DiscreteDepthPdf estimate_fine_hist(const DepthMixture& m, const RayIntervalSet& fine_partitions) {
  check_fine_partitions(m.intervals(), fine_partitions);
  double covered = 0.0;
  const auto e = covered_masses(m, fine_partitions, covered);
  if (e.empty()) {
    DiscreteDepthPdf pdf{fine_partitions, std::vector<double>(fine_partitions.size(), 1.0 / fine_partitions.size()), true};
    return pdf;
  }
  return DiscreteDepthPdf{fine_partitions, e, false};
}

double kl_divergence(const DiscreteDepthPdf& p, const DiscreteDepthPdf& q, double epsilon) {
  if (p.mass.size() != q.mass.size()) throw std::invalid_argument("kl_divergence: bin count mismatch");
  const auto qf = floor_and_renormalize(q.mass, epsilon);
  return kl_terms(p.mass, qf);
}

DeLossValue de_loss(const DiscreteDepthPdf& h_fine, const DiscreteDepthPdf& h_fine_est, std::span<const double> mu_raw,
                    std::span<const double> sigma_raw, const LossConfig& cfg) {
  if (h_fine.mass.size() != h_fine_est.mass.size()) throw std::invalid_argument("de_loss: bin count mismatch");
  DeLossValue v;
  const auto est = floor_and_renormalize(h_fine_est.mass, cfg.kl_epsilon);
  v.kl = directed_kl(est, h_fine.mass, cfg, nullptr);
  regularizers(mu_raw, sigma_raw, cfg, v);
  v.value = v.kl + v.mu_reg + v.sigma_reg;
  return v;
}

double total_loss(double nerf_loss, double de, const LossConfig& cfg) { return nerf_loss + cfg.lambda_de * de; }

DeGradient de_loss_with_gradient(const DiscreteDepthPdf& h_coarse, std::span<const double> mu_raw,
                                 std::span<const double> sigma_raw, const RayIntervalSet& fine_partitions,
                                 const DiscreteDepthPdf& h_fine, const LossConfig& cfg) {
  const auto& iv = h_coarse.intervals;
  const std::size_t n = iv.size();
  const std::size_t nf = fine_partitions.size();
  if (mu_raw.size() != n || sigma_raw.size() != n) throw std::invalid_argument("de_loss: head count mismatch");
  if (h_fine.mass.size() != nf) throw std::invalid_argument("de_loss: fine histogram does not match partitions");

  std::vector<double> mu_rel(n), sigma_rel(n);
  for (std::size_t i = 0; i < n; ++i) {
    mu_rel[i] = sigmoid(mu_raw[i]);
    sigma_rel[i] = sigmoid(sigma_raw[i]);
  }
  const DepthMixture mixture = build_depth_mixture(h_coarse, mu_rel, sigma_rel);
  check_fine_partitions(iv, fine_partitions);
  const auto cdf = cdf_at_partitions(mixture, fine_partitions);

  DeGradient out;
  out.d_coarse_mass.assign(n, 0.0);
  out.d_mu_raw.assign(n, 0.0);
  out.d_sigma_raw.assign(n, 0.0);

  double covered = 0.0;
  auto e = covered_masses(mixture, fine_partitions, covered);
  const bool degenerate = e.empty();
  if (degenerate) e.assign(nf, 1.0 / static_cast<double>(nf));
  out.estimate = floor_and_renormalize(e, cfg.kl_epsilon);

  std::vector<double> g_est;
  out.loss.kl = directed_kl(out.estimate, h_fine.mass, cfg, &g_est);
  regularizers(mu_raw, sigma_raw, cfg, out.loss);
  out.loss.value = out.loss.kl + out.loss.mu_reg + out.loss.sigma_reg;

  if (!degenerate) {
    // est = e' / S with e' = max(e, eps).
    double floored_sum = 0.0;
    for (double v : e) floored_sum += std::max(v, cfg.kl_epsilon);
    double proj = 0.0;
    for (std::size_t j = 0; j < nf; ++j) proj += g_est[j] * out.estimate[j];
    std::vector<double> d_e(nf);
    for (std::size_t j = 0; j < nf; ++j) d_e[j] = e[j] > cfg.kl_epsilon ? (g_est[j] - proj) / floored_sum : 0.0;

    // e = raw / covered, raw_j = F_{j+1} - F_j.
    double proj_e = 0.0;
    for (std::size_t j = 0; j < nf; ++j) proj_e += d_e[j] * e[j];
    std::vector<double> d_raw(nf);
    for (std::size_t j = 0; j < nf; ++j) d_raw[j] = (d_e[j] - proj_e) / covered;

    std::vector<double> d_mu(n, 0.0), d_sigma(n, 0.0), prefix(n + 1, 0.0);
    for (std::size_t k = 0; k <= nf; ++k) {
      const double d_f = (k > 0 ? d_raw[k - 1] : 0.0) - (k < nf ? d_raw[k] : 0.0);
      if (d_f == 0.0) continue;
      const std::size_t i = cdf.bin[k];
      // F = sum_{j<i} h_j + h_i G_i.
      prefix[i] += d_f;
      out.d_coarse_mass[i] += d_f * cdf.within[k];
      const auto dg = mixture.gaussians()[i].cdf_gradient(fine_partitions.partitions()[k]);
      d_mu[i] += d_f * h_coarse.mass[i] * dg.d_mu;
      d_sigma[i] += d_f * h_coarse.mass[i] * dg.d_sigma;
    }
    double running = 0.0;
    for (std::size_t j = n; j-- > 0;) {
      running += prefix[j + 1];
      out.d_coarse_mass[j] += running;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double width = iv.delta(i);
      out.d_mu_raw[i] = d_mu[i] * width * mu_rel[i] * (1.0 - mu_rel[i]);
      if (sigma_rel[i] > kSigmaRelMin) out.d_sigma_raw[i] = d_sigma[i] * width * sigma_rel[i] * (1.0 - sigma_rel[i]);
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.d_mu_raw[i] += 2.0 * cfg.lambda_mu * mu_raw[i] * inv_n;
    out.d_sigma_raw[i] += 2.0 * cfg.lambda_sigma * sigma_raw[i] * inv_n;
  }
  return out;
}

}  // namespace ddnerf

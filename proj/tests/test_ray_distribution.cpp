#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ddnerf/ray_distribution.hpp"
#include "ddnerf/sampling.hpp"
#include "oracles.hpp"

using namespace ddnerf;

namespace {

double variance(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_SUITE("ray_distribution") {

TEST_CASE("interval set rejects bad partitions") {
  CHECK_THROWS_AS(RayIntervalSet({1.0}), std::invalid_argument);
  CHECK_THROWS_AS(RayIntervalSet({1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(RayIntervalSet({2.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(RayIntervalSet({0.0, NAN}), std::invalid_argument);
  RayIntervalSet iv({0.0, 1.0, 3.0});
  CHECK(iv.size() == 2);
  CHECK(iv.delta(1) == 2.0);
}

TEST_CASE("locate uses right-open bins with the last bin closed") {
  RayIntervalSet iv({0.0, 1.0, 2.0});
  CHECK(iv.locate(0.0) == 0);
  CHECK(iv.locate(1.0) == 1);
  CHECK(iv.locate(2.0) == 1);
  CHECK(iv.locate(-0.1) == 2);
  CHECK(iv.locate(2.1) == 2);
}

TEST_CASE("normalize_to_pdf") {
  RayIntervalSet two({0.0, 1.0, 2.0});
  RayIntervalSet three({0.0, 1.0, 2.0, 3.0});
  CHECK(normalize_to_pdf(std::vector<double>{1.0, 0.0}, two).mass == std::vector<double>{1.0, 0.0});
  CHECK(normalize_to_pdf(std::vector<double>{0.5, 0.25, 0.25}, three).mass == std::vector<double>{0.5, 0.25, 0.25});

  const std::vector<double> w{2.0, 6.0};
  const double sum = w[0] + w[1];
  const auto p = normalize_to_pdf(w, two);
  CHECK(p.mass[0] == doctest::Approx(2.0 / sum).epsilon(1e-15));
  CHECK(p.mass[1] == doctest::Approx(6.0 / sum).epsilon(1e-15));
  CHECK_FALSE(p.degenerate);

  const auto z = normalize_to_pdf(std::vector<double>{0.0, 0.0, 0.0}, three);
  CHECK(z.degenerate);
  for (double m : z.mass) CHECK(m == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(normalize_to_pdf(std::vector<double>{1.0}, two), std::invalid_argument);
  CHECK_THROWS_AS(normalize_to_pdf(std::vector<double>{1.0, -1.0}, two), std::invalid_argument);
}

TEST_CASE("build_interval_gaussian") {
  auto g = build_interval_gaussian(0.5, 0.1, 2.0, 4.0);
  CHECK(g.mu_abs == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(g.sigma_abs == doctest::Approx(0.2).epsilon(1e-15));

  g = build_interval_gaussian(0.25, 0.1, 1.0, 3.0);
  CHECK(g.mu_abs == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(g.sigma_abs == doctest::Approx(0.2).epsilon(1e-15));

  g = build_interval_gaussian(0.5, 0.05, 0.0, 1.0);
  const double k_oracle = oracle::normal_cdf(10.0) - oracle::normal_cdf(-10.0);
  CHECK(std::abs(g.trunc_mass - 1.0) < 1e-9);
  CHECK(std::abs(g.trunc_mass - k_oracle) < 1e-12);

  // Off-centre truncation mass against the erfc oracle.
  g = build_interval_gaussian(0.2, 0.4, 1.0, 3.0);
  const double a = (1.0 - g.mu_abs) / g.sigma_abs, b = (3.0 - g.mu_abs) / g.sigma_abs;
  CHECK(g.trunc_mass == doctest::Approx(oracle::normal_cdf(b) - oracle::normal_cdf(a)).epsilon(1e-12));

  // sigma_rel floor.
  g = build_interval_gaussian(0.5, 1e-9, 0.0, 1.0);
  CHECK(g.sigma_rel == kSigmaRelMin);
  CHECK(std::isfinite(g.pdf(0.5)));

  CHECK_THROWS_AS(build_interval_gaussian(NAN, 0.1, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_interval_gaussian(0.5, INFINITY, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_interval_gaussian(0.5, 0.1, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("escaped gaussian falls back to the uniform density") {
  auto g = build_interval_gaussian(0.0, 0.001, 0.0, 1.0).widened(1.0);
  CHECK_FALSE(g.uniform);
  // Centre far outside: mass between 10 and 11 standard deviations is ~1e-23.
  g.mu_abs = -10.0 * g.sigma_abs;
  g = g.widened(1.0);
  CHECK(g.uniform);
  CHECK(g.pdf(0.3) == doctest::Approx(1.0));
  CHECK(g.cdf(0.3) == doctest::Approx(0.3));
  CHECK(g.quantile(0.7) == doctest::Approx(0.7));
}

TEST_CASE("truncated_pdf_eval") {
  const auto g = build_interval_gaussian(0.4, 0.15, 1.0, 2.0);
  for (double d : {0.01, 0.1, 0.3}) CHECK(truncated_pdf_eval(g, g.mu_abs + d) == doctest::Approx(truncated_pdf_eval(g, g.mu_abs - d)).epsilon(1e-14));
  CHECK(truncated_pdf_eval(g, 0.99) == 0.0);
  CHECK(truncated_pdf_eval(g, 2.01) == 0.0);

  const double integral = oracle::integrate([&](double t) { return truncated_pdf_eval(g, t); }, 1.0, 2.0,
                                            oracle::peak_breaks(g.mu_abs, g.sigma_abs));
  CHECK(std::abs(integral - 1.0) < 1e-6);

  // Very wide Gaussian: close to uniform.
  const auto wide = build_interval_gaussian(0.5, 10.0, 1.0, 3.0);
  CHECK(std::abs(truncated_pdf_eval(wide, 2.0) - 0.5) < 0.01 * 0.5);
  const double wide_integral = oracle::integrate([&](double t) { return truncated_pdf_eval(wide, t); }, 1.0, 3.0);
  CHECK(std::abs(wide_integral - 1.0) < 1e-6);
}

TEST_CASE("mixture pdf") {
  RayIntervalSet iv({0.0, 1.0, 2.0});
  const auto m = build_depth_mixture(normalize_to_pdf(std::vector<double>{1.0, 0.0}, iv), std::vector<double>{0.3, 0.5},
                                     std::vector<double>{0.2, 0.2});
  for (double t : {0.0, 0.1, 0.3, 0.77}) CHECK(mixture_pdf_eval(m, t) == m.gaussians()[0].pdf(t));
  CHECK(mixture_pdf_eval(m, 1.5) == 0.0);
  CHECK(mixture_pdf_eval(m, -0.5) == 0.0);
  CHECK(mixture_pdf_eval(m, 2.5) == 0.0);

  const auto same = apply_uncertainty(m, 1.0);
  for (double t : {0.1, 0.3, 0.77}) CHECK(mixture_pdf_eval(same, t) == mixture_pdf_eval(m, t));

  std::mt19937_64 rng(7);
  for (int k = 0; k < 20; ++k) {
    const auto d = oracle::random_mixture_params(rng, 1 + rng() % 8);
    const auto mix = oracle::make_mixture(d);
    CHECK(std::abs(oracle::integrate_mixture(mix, mix.intervals().front(), mix.intervals().back()) - 1.0) < 1e-6);
  }
}

TEST_CASE("mixture cdf") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const auto d = oracle::random_mixture_params(rng, 2 + rng() % 6);
    const auto m = oracle::make_mixture(d);
    const auto& iv = m.intervals();
    CHECK(mixture_cdf_eval(m, iv.front()) == 0.0);
    CHECK(mixture_cdf_eval(m, iv.back()) == 1.0);
    double prefix = 0.0;
    for (std::size_t i = 0; i < iv.size(); ++i) {
      CHECK(mixture_cdf_eval(m, iv.lo(i)) == doctest::Approx(prefix).epsilon(1e-14));
      prefix += m.weights().mass[i];
    }
    for (int j = 0; j < 10; ++j) {
      const double t = iv.front() + uni(rng) * (iv.back() - iv.front());
      CHECK(std::abs(mixture_cdf_eval(m, t) - oracle::integrate_mixture(m, iv.front(), t)) < 1e-6);
    }
  }
}

TEST_CASE("inverse_cdf_sample") {
  RayIntervalSet one({1.0, 3.0});
  const auto single = build_depth_mixture(normalize_to_pdf(std::vector<double>{1.0}, one), std::vector<double>{0.5},
                                          std::vector<double>{0.2});
  CHECK(inverse_cdf_sample(single, std::vector<double>{0.5})[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(inverse_cdf_sample(single, std::vector<double>{0.0})[0] == 1.0);
  CHECK(inverse_cdf_sample(single, std::vector<double>{1.0})[0] == 3.0);
  CHECK_THROWS_AS(inverse_cdf_sample(single, std::vector<double>{1.5}), std::invalid_argument);
  CHECK_THROWS_AS(inverse_cdf_sample(single, std::vector<double>{-0.1}), std::invalid_argument);
  CHECK_THROWS_AS(inverse_cdf_sample(single, std::vector<double>{NAN}), std::invalid_argument);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const auto m = oracle::make_mixture(oracle::random_mixture_params(rng, 1 + rng() % 8));
    std::vector<double> u(20);
    for (auto& x : u) x = uni(rng);
    std::sort(u.begin(), u.end());
    const auto t = inverse_cdf_sample(m, u);
    CHECK(std::is_sorted(t.begin(), t.end()));
    for (std::size_t j = 0; j < u.size(); ++j) {
      CHECK(std::abs(mixture_cdf_eval(m, t[j]) - u[j]) < 1e-8);
      const double b = oracle::bisect_quantile([&](double x) { return mixture_cdf_eval(m, x); }, m.intervals().front(),
                                               m.intervals().back(), u[j]);
      CHECK(std::abs(mixture_cdf_eval(m, b) - mixture_cdf_eval(m, t[j])) < 1e-8);
    }
  }
}

TEST_CASE("stratified quantiles") {
  std::mt19937_64 a(5), b(5);
  const auto u = stratified_quantiles(16, a);
  CHECK(u == stratified_quantiles(16, b));
  for (std::size_t k = 0; k < u.size(); ++k) {
    CHECK(u[k] >= k / 16.0);
    CHECK(u[k] < (k + 1) / 16.0);
  }
}

TEST_CASE("smooth_discrete_pdf") {
  RayIntervalSet three({0.0, 1.0, 2.0, 3.0});
  const auto b = smooth_discrete_pdf(normalize_to_pdf(std::vector<double>{0.0, 1.0, 0.0}, three), SmoothingMode::blur3);
  CHECK(b.mass[0] == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(b.mass[1] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(b.mass[2] == doctest::Approx(0.1).epsilon(1e-14));

  const auto uniform = RayIntervalSet::uniform(0.0, 1.0, 6);
  const auto u = smooth_discrete_pdf(normalize_to_pdf(std::vector<double>(6, 1.0), uniform), SmoothingMode::blur3);
  for (double m : u.mass) CHECK(m == doctest::Approx(1.0 / 6.0).epsilon(1e-14));

  const auto five = RayIntervalSet::uniform(0.0, 5.0, 5);
  const auto mb = smooth_discrete_pdf(normalize_to_pdf(std::vector<double>{0, 0, 1, 0, 0}, five), SmoothingMode::max2_blur2);
  for (std::size_t i : {1u, 2u, 3u}) CHECK(mb.mass[i] > 0.0);
  // (max(w[i-1], w[i]) + max(w[i], w[i+1])) / 2 = [0, .5, 1, .5, 0], then normalized.
  CHECK(mb.mass[0] == 0.0);
  CHECK(mb.mass[1] == doctest::Approx(0.25));
  CHECK(mb.mass[2] == doctest::Approx(0.5));
  CHECK(mb.mass[3] == doctest::Approx(0.25));
  CHECK(mb.mass[4] == 0.0);

  CHECK_THROWS_AS(smooth_discrete_pdf(normalize_to_pdf(std::vector<double>{1.0}, RayIntervalSet({0.0, 1.0})),
                                      SmoothingMode::blur3),
                  std::invalid_argument);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + rng() % 20;
    std::vector<double> w(n);
    for (auto& x : w) x = uni(rng) < 0.3 ? 0.0 : uni(rng);
    for (auto mode : {SmoothingMode::blur3, SmoothingMode::max2_blur2}) {
      const auto s = smooth_discrete_pdf(normalize_to_pdf(w, RayIntervalSet::uniform(0.0, 1.0, n)), mode);
      CHECK(std::abs(std::accumulate(s.mass.begin(), s.mass.end(), 0.0) - 1.0) < 1e-12);
      CHECK(*std::min_element(s.mass.begin(), s.mass.end()) >= 0.0);
    }
  }
}

TEST_CASE("apply_uncertainty") {
  std::mt19937_64 rng(21);
  const auto m = oracle::make_mixture(oracle::random_mixture_params(rng, 4));
  const auto same = apply_uncertainty(m, 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(same.gaussians()[i].sigma_abs == m.gaussians()[i].sigma_abs);
    CHECK(same.gaussians()[i].trunc_mass == m.gaussians()[i].trunc_mass);
  }
  const auto twice = apply_uncertainty(m, 2.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(twice.gaussians()[i].sigma_abs == 2.0 * m.gaussians()[i].sigma_abs);
    CHECK(twice.weights().mass[i] == m.weights().mass[i]);
  }
  CHECK_THROWS_AS(apply_uncertainty(m, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(apply_uncertainty(m, NAN), std::invalid_argument);

  RayIntervalSet iv({0.0, 1.0, 2.0});
  const auto narrow = build_depth_mixture(normalize_to_pdf(std::vector<double>{0.6, 0.4}, iv),
                                          std::vector<double>{0.3, 0.6}, std::vector<double>{0.05, 0.08});
  std::mt19937_64 a(1), b(1);
  const auto s1 = inverse_cdf_sample(narrow, stratified_quantiles(100000, a));
  const auto s3 = inverse_cdf_sample(apply_uncertainty(narrow, 3.0), stratified_quantiles(100000, b));
  CHECK(variance(s3) > variance(s1));
}

TEST_CASE("truncation locality") {
  std::mt19937_64 rng(4);
  auto d = oracle::random_mixture_params(rng, 6);
  const auto m = oracle::make_mixture(d);
  d.mu_rel[2] = 0.9;
  d.sigma_rel[2] = 0.02;
  const auto changed = oracle::make_mixture(d);
  const auto& iv = m.intervals();
  int inside_diff = 0;
  for (int k = 0; k <= 5000; ++k) {
    const double t = iv.front() + (iv.back() - iv.front()) * k / 5000.0;
    if (t >= iv.lo(2) && t <= iv.hi(2)) {
      inside_diff += mixture_pdf_eval(m, t) != mixture_pdf_eval(changed, t);
      continue;
    }
    CHECK(mixture_pdf_eval(m, t) == mixture_pdf_eval(changed, t));
  }
  if (m.weights().mass[2] > 0.0) CHECK(inside_diff > 0);
}

TEST_CASE("mixture sampling resolves depth below the bin width") {
  RayIntervalSet iv({0.0, 1.0, 2.0});
  const auto h = normalize_to_pdf(std::vector<double>{1.0, 0.0}, iv);
  const auto m = build_depth_mixture(h, std::vector<double>{0.5, 0.5}, std::vector<double>{0.05, 0.05});
  std::mt19937_64 a(2), b(2);
  auto dd = inverse_cdf_sample(m, stratified_quantiles(100000, a));
  auto pc = sample_piecewise_constant(h, stratified_quantiles(100000, b));
  const auto width95 = [](std::vector<double> s) {
    std::sort(s.begin(), s.end());
    return s[static_cast<std::size_t>(0.975 * s.size())] - s[static_cast<std::size_t>(0.025 * s.size())];
  };
  CHECK(width95(dd) <= 0.25);
  CHECK(width95(pc) > 0.9);
}

}  // TEST_SUITE

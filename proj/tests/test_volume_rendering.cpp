#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <stdexcept>

#include "ddnerf/image.hpp"
#include "ddnerf/volume_rendering.hpp"
#include "oracles.hpp"

using namespace ddnerf;
namespace fs = std::filesystem;

namespace {

// Direct evaluation of mean SSIM (11x11 Gaussian window, sigma 1.5, valid
// region, averaged over channels).
double ssim_reference(const Image& a, const Image& b) {
  const int r = 5;
  double win[11][11], wsum = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) wsum += win[y + r][x + r] = std::exp(-(x * x + y * y) / (2.0 * 1.5 * 1.5));
  const double c1 = 0.0001, c2 = 0.0009;
  double total = 0.0;
  int count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = r; y < a.height - r; ++y) {
      for (int x = r; x < a.width - r; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const double w = win[dy + r][dx + r] / wsum;
            const double va = a.at(x + dx, y + dy, c), vb = b.at(x + dx, y + dy, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        saa -= ma * ma;
        sbb -= mb * mb;
        sab -= ma * mb;
        total += ((2 * ma * mb + c1) * (2 * sab + c2)) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
        ++count;
      }
    }
  }
  return total / count;
}

Image random_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Image img(w, h, c);
  for (auto& v : img.data) v = uni(rng);
  return img;
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ddnerf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("volume_rendering") {

TEST_CASE("opacity_from_density") {
  CHECK(opacity_from_density(0.0, 1.0) == 0.0);
  CHECK(std::abs(opacity_from_density(1e9, 1.0) - 1.0) < 1e-12);
  CHECK(opacity_from_density(std::log(2.0), 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(opacity_from_density(-1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(opacity_from_density(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(opacity_from_density(1.0, -1.0), std::invalid_argument);
}

TEST_CASE("compositing_weights") {
  CHECK(compositing_weights(std::vector<double>{1.0, 0.7, 0.3}) == std::vector<double>{1.0, 0.0, 0.0});
  CHECK(compositing_weights(std::vector<double>{0.0, 0.0}) == std::vector<double>{0.0, 0.0});
  const auto w = compositing_weights(std::vector<double>{0.5, 0.5});
  CHECK(w[0] == 0.5);
  CHECK(w[1] == 0.25);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> a(1 + rng() % 12);
    for (auto& x : a) x = uni(rng);
    const auto wk = compositing_weights(a);
    double sum = 0.0, trans = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sum += wk[i];
      trans *= 1.0 - a[i];
      CHECK(wk[i] >= 0.0);
    }
    CHECK(sum == doctest::Approx(1.0 - trans).epsilon(1e-13));
  }

  // Order sensitivity.
  const auto fwd = compositing_weights(std::vector<double>{0.2, 0.9});
  const auto rev = compositing_weights(std::vector<double>{0.9, 0.2});
  CHECK(fwd[0] != rev[1]);
}

TEST_CASE("composite_color") {
  CHECK(composite_color(std::vector<double>{1.0}, std::vector<Rgb>{Rgb(1, 1, 1)}) == Rgb(1, 1, 1));
  CHECK(composite_color(std::vector<double>{0.0, 0.0}, std::vector<Rgb>{Rgb(1, 0, 0), Rgb(0, 1, 0)}) == Rgb::Zero());
  const Rgb bg(0.2, 0.4, 0.6);
  CHECK(composite_color(std::vector<double>{0.0}, std::vector<Rgb>{Rgb(1, 0, 0)}, bg).isApprox(bg));
  const Rgb c = composite_color(std::vector<double>{0.5, 0.25}, std::vector<Rgb>{Rgb(1, 0, 0), Rgb(0, 1, 0)});
  CHECK(c.isApprox(Rgb(0.5, 0.25, 0.0)));
  CHECK_THROWS_AS(composite_color(std::vector<double>{0.5}, std::vector<Rgb>{}), std::invalid_argument);

  // Linear in the colors for fixed weights.
  const std::vector<double> w{0.3, 0.2, 0.1};
  const std::vector<Rgb> c1{Rgb(0.1, 0.2, 0.3), Rgb(0.3, 0.1, 0.0), Rgb(0.2, 0.2, 0.2)};
  const std::vector<Rgb> c2{Rgb(0.0, 0.1, 0.1), Rgb(0.1, 0.1, 0.1), Rgb(0.3, 0.0, 0.1)};
  std::vector<Rgb> mix(3);
  for (int i = 0; i < 3; ++i) mix[i] = 0.5 * c1[i] + 0.5 * c2[i];
  CHECK(composite_color(w, mix).isApprox(0.5 * composite_color(w, c1) + 0.5 * composite_color(w, c2), 1e-14));
}

TEST_CASE("composite clamps only the output color") {
  DensitySamples s{RayIntervalSet({0.0, 1.0}), {1e3}, {Rgb(1.5, -0.5, 0.5)}};
  const auto r = composite(s);
  CHECK(r.raw_color[0] > 1.0);
  CHECK(r.pixel_color[0] == 1.0);
  CHECK(r.pixel_color[1] == 0.0);
  CHECK(r.accumulated_opacity <= 1.0 + 1e-9);

  DensitySamples empty{RayIntervalSet({2.0, 3.0, 4.0}), {0.0, 0.0}, {Rgb::Ones(), Rgb::Ones()}};
  const auto e = composite(empty, Rgb(0.1, 0.2, 0.3));
  CHECK(e.empty);
  CHECK(e.expected_depth == 4.0);
  CHECK(e.pixel_color.isApprox(Rgb(0.1, 0.2, 0.3)));
}

TEST_CASE("expected_depth_discrete") {
  RayIntervalSet iv({0.0, 1.0, 2.0});
  CHECK(expected_depth_discrete(normalize_to_pdf(std::vector<double>{1.0, 0.0}, iv)) == 0.5);
  CHECK(expected_depth_discrete(normalize_to_pdf(std::vector<double>{0.25, 0.75}, iv)) == doctest::Approx(1.25));
  RayIntervalSet sym({-3.0, -1.0, 0.0, 1.0, 3.0});
  CHECK(expected_depth_discrete(normalize_to_pdf(std::vector<double>(4, 1.0), sym)) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("expected_depth_mixture") {
  RayIntervalSet one({1.0, 3.0});
  const auto h = normalize_to_pdf(std::vector<double>{1.0}, one);
  CHECK(expected_depth_mixture(build_depth_mixture(h, std::vector<double>{0.5}, std::vector<double>{0.3})) ==
        doctest::Approx(2.0).epsilon(1e-14));

  std::mt19937_64 rng(17);
  for (int k = 0; k < 30; ++k) {
    const auto m = oracle::make_mixture(oracle::random_mixture_params(rng, 1 + rng() % 8));
    const double quad = oracle::integrate_mixture(m, m.intervals().front(), m.intervals().back(), [](double t) { return t; });
    CHECK(std::abs(expected_depth_mixture(m) - quad) < 1e-6);

    const auto wide = apply_uncertainty(m, 1e4);
    const double discrete = expected_depth_discrete(m.weights());
    CHECK(std::abs(expected_depth_mixture(wide) - discrete) <= 0.01 * std::abs(discrete));
  }
}

TEST_CASE("psnr and ssim") {
  std::mt19937_64 rng(2);
  const Image a = random_image(rng, 24, 20, 3);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Image b = a;
  for (auto& v : b.data) v += 0.1;  // MSE exactly 0.01
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));

  Image bin(16, 16, 1), inv(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      bin.at(x, y, 0) = ((x / 2 + y / 2) % 2) ? 1.0 : 0.0;
      inv.at(x, y, 0) = 1.0 - bin.at(x, y, 0);
    }
  CHECK(ssim(bin, inv) < 0.1);
  CHECK(ssim(bin, inv) == doctest::Approx(ssim_reference(bin, inv)).epsilon(1e-10));

  const Image c = random_image(rng, 24, 20, 3);
  CHECK(ssim(a, c) == doctest::Approx(ssim_reference(a, c)).epsilon(1e-10));

  CHECK_THROWS_AS(psnr(a, Image(24, 21, 3)), std::invalid_argument);
  CHECK_THROWS_AS(ssim(a, Image(24, 20, 1)), std::invalid_argument);
}

TEST_CASE("ppm and pgm round trips") {
  const auto dir = temp_dir("images");
  std::mt19937_64 rng(5);
  const Image a = quantize8(random_image(rng, 7, 5, 3));
  write_ppm(dir / "a.ppm", a);
  CHECK(read_ppm(dir / "a.ppm") == a);

  Image d(6, 4, 1);
  std::uniform_real_distribution<double> uni(0.0, 6.0);
  for (auto& v : d.data) v = std::round(uni(rng) / 6.0 * 65535.0) / 65535.0 * 6.0;
  write_pgm16(dir / "d.pgm", d, 6.0);
  const Image back = read_pgm16(dir / "d.pgm", 6.0);
  for (std::size_t i = 0; i < d.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(d.data[i]).epsilon(1e-15));
  fs::remove_all(dir);
}

}  // TEST_SUITE

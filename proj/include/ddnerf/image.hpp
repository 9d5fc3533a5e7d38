#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ddnerf/serialize.hpp"

namespace ddnerf {

/// Row-major interleaved image with channel values nominally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  bool operator==(const Image&) const = default;
};

/// Rounds every value to the nearest multiple of 1/255 in [0,1], the exact
/// set of values an 8-bit PPM can hold.
Image quantize8(const Image& img);

/// Peak signal-to-noise ratio for unit data range. Identical images give
/// +infinity. Throws std::invalid_argument on dimension mismatch.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over channels with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, unit data range, valid-region averaging.
double ssim(const Image& a, const Image& b);

/// Binary P6, 8-bit. Values are clamped and rounded.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

/// Binary P5, 16-bit big-endian. Single-channel values are divided by
/// scale, clamped to [0,1] and stored as round(v * 65535).
void write_pgm16(const std::filesystem::path& path, const Image& img, double scale);
/// Inverse of write_pgm16: code / 65535 * scale.
Image read_pgm16(const std::filesystem::path& path, double scale);

}  // namespace ddnerf

#include "ddnerf/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ddnerf {

namespace {

void require_same_shape(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument("image dimensions differ");
  if (a.data.empty()) throw std::invalid_argument("empty image");
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

// Parses the "P? width height maxval" header followed by a single whitespace byte.
struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

PnmHeader parse_header(const std::vector<std::uint8_t>& bytes) {
  PnmHeader h;
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&] {
    skip_space();
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  h.magic = token();
  try {
    h.width = std::stoi(token());
    h.height = std::stoi(token());
    h.maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw std::runtime_error("malformed PNM header");
  }
  if (pos >= bytes.size()) throw std::runtime_error("truncated PNM file");
  h.data_offset = pos + 1;
  return h;
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable valid-mode filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int width, int height, const std::vector<double>& k) {
  const int ks = static_cast<int>(k.size());
  const int ow = width - ks + 1, oh = height - ks + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < ks; ++i) s += k[i] * plane[static_cast<std::size_t>(y) * width + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < ks; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

Image quantize8(const Image& img) {
  Image q = img;
  for (double& v : q.data) v = static_cast<double>(to_byte(v)) / 255.0;
  return q;
}

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b);
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b);
  int size = std::min({11, a.width, a.height});
  if (size % 2 == 0) --size;
  const auto k = gaussian_window(size, 1.5);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const std::size_t pixels = static_cast<std::size_t>(a.width) * a.height;

  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(pixels), y(pixels), xx(pixels), yy(pixels), xy(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      x[p] = a.data[p * a.channels + c];
      y[p] = b.data[p * b.channels + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter_valid(x, a.width, a.height, k);
    const auto my = filter_valid(y, a.width, a.height, k);
    const auto sxx = filter_valid(xx, a.width, a.height, k);
    const auto syy = filter_valid(yy, a.width, a.height, k);
    const auto sxy = filter_valid(xy, a.width, a.height, k);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / a.channels;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("write_ppm expects 3 channels");
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + img.data.size());
  for (double v : img.data) bytes.push_back(to_byte(v));
  write_file_atomic(path, bytes);
}

Image read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const auto h = parse_header(bytes);
  if (h.magic != "P6" || h.maxval != 255) throw std::runtime_error(path.string() + ": not an 8-bit P6 file");
  Image img(h.width, h.height, 3);
  if (bytes.size() < h.data_offset + img.data.size()) throw std::runtime_error(path.string() + ": truncated pixel data");
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(bytes[h.data_offset + i]) / 255.0;
  return img;
}

void write_pgm16(const std::filesystem::path& path, const Image& img, double scale) {
  if (img.channels != 1) throw std::invalid_argument("write_pgm16 expects 1 channel");
  if (!(scale > 0.0)) throw std::invalid_argument("write_pgm16: scale must be positive");
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n65535\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (double v : img.data) {
    const auto code = static_cast<std::uint16_t>(std::lround(std::clamp(v / scale, 0.0, 1.0) * 65535.0));
    bytes.push_back(static_cast<std::uint8_t>(code >> 8));
    bytes.push_back(static_cast<std::uint8_t>(code & 0xff));
  }
  write_file_atomic(path, bytes);
}

Image read_pgm16(const std::filesystem::path& path, double scale) {
  const auto bytes = read_file_bytes(path);
  const auto h = parse_header(bytes);
  if (h.magic != "P5" || h.maxval != 65535) throw std::runtime_error(path.string() + ": not a 16-bit P5 file");
  Image img(h.width, h.height, 1);
  if (bytes.size() < h.data_offset + 2 * img.data.size()) throw std::runtime_error(path.string() + ": truncated pixel data");
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const unsigned code = (static_cast<unsigned>(bytes[h.data_offset + 2 * i]) << 8) | bytes[h.data_offset + 2 * i + 1];
    img.data[i] = static_cast<double>(code) / 65535.0 * scale;
  }
  return img;
}

}  // namespace ddnerf

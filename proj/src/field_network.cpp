#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ddnerf/activations.hpp"
#include "ddnerf/radiance_field.hpp"
#include "ddnerf/ray_distribution.hpp"
#include "ddnerf/serialize.hpp"

namespace ddnerf {

// ---------------------------------------------------------------------------
// Positional encoding

void encode_into(const Vec3& x, const EncodingConfig& cfg, double* out) {
  int k = 0;
  if (cfg.include_input)
    for (int c = 0; c < 3; ++c) out[k++] = x[c];
  double freq = std::numbers::pi;
  for (int l = 0; l < cfg.num_frequencies; ++l, freq *= 2.0) {
    for (int c = 0; c < 3; ++c) out[k++] = std::sin(freq * x[c]);
    for (int c = 0; c < 3; ++c) out[k++] = std::cos(freq * x[c]);
  }
}

Eigen::VectorXd encode(const Vec3& x, const EncodingConfig& cfg) {
  Eigen::VectorXd f(cfg.output_dim());
  encode_into(x, cfg, f.data());
  return f;
}

Vec3 encode_backward(const Vec3& x, const EncodingConfig& cfg, const double* d_features) {
  Vec3 g = Vec3::Zero();
  int k = 0;
  if (cfg.include_input)
    for (int c = 0; c < 3; ++c) g[c] += d_features[k++];
  double freq = std::numbers::pi;
  for (int l = 0; l < cfg.num_frequencies; ++l, freq *= 2.0) {
    for (int c = 0; c < 3; ++c) g[c] += d_features[k++] * freq * std::cos(freq * x[c]);
    for (int c = 0; c < 3; ++c) g[c] -= d_features[k++] * freq * std::sin(freq * x[c]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// FieldNetwork

FieldNetwork::Layer FieldNetwork::add_layer(int rows, int cols) {
  Layer l;
  l.rows = rows;
  l.cols = cols;
  l.weight_offset = params_.size();
  l.bias_offset = l.weight_offset + static_cast<std::size_t>(rows) * cols;
  params_.resize(l.bias_offset + rows, 0.0);
  return l;
}

void FieldNetwork::init_layer(const Layer& l, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-bound, bound);
  const std::size_t count = static_cast<std::size_t>(l.rows) * l.cols;
  for (std::size_t i = 0; i < count; ++i) params_[l.weight_offset + i] = uni(rng);
}

FieldNetwork::FieldNetwork(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.hidden_layers < 1 || cfg.hidden_width < 1) throw std::invalid_argument("network needs at least one hidden layer");
  if (cfg.encoding.num_frequencies < 0) throw std::invalid_argument("negative frequency count");
  std::mt19937_64 rng(seed);
  int fan_in = cfg.trunk_input_dim();
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    trunk_.push_back(add_layer(cfg.hidden_width, fan_in));
    init_layer(trunk_.back(), std::sqrt(6.0 / fan_in), rng);
    fan_in = cfg.hidden_width;
  }
  head_ = add_layer(4, fan_in);
  init_layer(head_, std::sqrt(6.0 / (fan_in + 4)), rng);
  if (cfg.use_direction) {
    // Direction only reaches the color logits; the bias slots stay zero.
    dir_ = add_layer(3, 3);
    init_layer(*dir_, std::sqrt(6.0 / (fan_in + 3)), rng);
  }
  shared_count_ = params_.size();
  if (cfg.distribution_head) {
    // Separate stream so the shared parameters match a network without the head.
    std::mt19937_64 head_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    dist_head_ = add_layer(2, fan_in);
    init_layer(*dist_head_, std::sqrt(6.0 / (fan_in + 2)), head_rng);
  }
}

std::vector<std::pair<int, int>> FieldNetwork::layer_dims() const {
  std::vector<std::pair<int, int>> d;
  for (const auto& l : trunk_) d.emplace_back(l.rows, l.cols);
  d.emplace_back(head_.rows, head_.cols);
  if (dir_) d.emplace_back(dir_->rows, dir_->cols);
  if (dist_head_) d.emplace_back(dist_head_->rows, dist_head_->cols);
  return d;
}

Eigen::Map<const Eigen::MatrixXd> FieldNetwork::weight(const Layer& l) const {
  return {params_.data() + l.weight_offset, l.rows, l.cols};
}

Eigen::Map<const Eigen::VectorXd> FieldNetwork::bias(const Layer& l) const { return {params_.data() + l.bias_offset, l.rows}; }

Eigen::MatrixXd FieldNetwork::features(std::span<const IntervalQuery> queries) const {
  const int dim = cfg_.input_dim();
  const int enc = cfg_.encoding.output_dim();
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(queries.size()));
  for (std::size_t j = 0; j < queries.size(); ++j) {
    double* col = x.col(static_cast<Eigen::Index>(j)).data();
    encode_into(queries[j].position, cfg_.encoding, col);
    col[enc] = queries[j].length;
    if (cfg_.use_direction)
      for (int c = 0; c < 3; ++c) col[enc + 1 + c] = queries[j].direction[c];
  }
  return x;
}

NetworkOutput FieldNetwork::forward(const Eigen::MatrixXd& input, ForwardTape* tape) const {
  if (input.rows() != cfg_.input_dim()) throw std::invalid_argument("network input has the wrong dimension");
  if (tape) {
    tape->input = input;
    tape->hidden.clear();
    tape->recorded = true;
  }
  const int trunk_rows = cfg_.trunk_input_dim();
  Eigen::MatrixXd h = input.topRows(trunk_rows);
  for (const auto& l : trunk_) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    h = z.cwiseMax(0.0);
    if (tape) tape->hidden.push_back(h);
  }
  NetworkOutput out;
  out.main = weight(head_) * h;
  out.main.colwise() += bias(head_);
  if (dir_) out.main.topRows(3).noalias() += weight(*dir_) * input.bottomRows(3);
  if (dist_head_) {
    out.distribution = weight(*dist_head_) * h;
    out.distribution.colwise() += bias(*dist_head_);
  }
  return out;
}

std::vector<double> FieldNetwork::backward(const ForwardTape& tape, const Eigen::MatrixXd& d_main,
                                           const Eigen::MatrixXd* d_distribution, Eigen::MatrixXd* d_input) const {
  if (!tape.recorded || tape.hidden.size() != trunk_.size())
    throw std::logic_error("FieldNetwork::backward called without a recorded forward pass");
  const Eigen::Index n = tape.input.cols();
  if (d_main.rows() != 4 || d_main.cols() != n) throw std::invalid_argument("output gradient has the wrong shape");

  std::vector<double> grad(params_.size(), 0.0);
  // Results are evaluated into aligned temporaries before the copy: Eigen
  // picks scalar or packet reduction paths from the destination alignment,
  // which would make the low bits depend on where grad was allocated.
  auto store = [&](std::size_t offset, const Eigen::MatrixXd& m) { std::copy_n(m.data(), m.size(), grad.data() + offset); };

  const Eigen::MatrixXd& last = tape.hidden.back();
  store(head_.weight_offset, d_main * last.transpose());
  store(head_.bias_offset, d_main.rowwise().sum());
  Eigen::MatrixXd dh = weight(head_).transpose() * d_main;
  const int trunk_rows = cfg_.trunk_input_dim();
  if (dir_) store(dir_->weight_offset, d_main.topRows(3) * tape.input.bottomRows(3).transpose());
  if (d_distribution && dist_head_) {
    if (d_distribution->rows() != 2 || d_distribution->cols() != n)
      throw std::invalid_argument("distribution gradient has the wrong shape");
    store(dist_head_->weight_offset, *d_distribution * last.transpose());
    store(dist_head_->bias_offset, d_distribution->rowwise().sum());
    dh.noalias() += weight(*dist_head_).transpose() * *d_distribution;
  }

  for (std::size_t li = trunk_.size(); li-- > 0;) {
    const Layer& l = trunk_[li];
    const Eigen::MatrixXd& out = tape.hidden[li];
    Eigen::MatrixXd dz = (out.array() > 0.0).select(dh, 0.0);
    if (li == 0)
      store(l.weight_offset, dz * tape.input.topRows(trunk_rows).transpose());
    else
      store(l.weight_offset, dz * tape.hidden[li - 1].transpose());
    store(l.bias_offset, dz.rowwise().sum());
    if (li > 0 || d_input) dh.noalias() = weight(l).transpose() * dz;
  }
  if (d_input) {
    d_input->setZero(tape.input.rows(), n);
    d_input->topRows(trunk_rows) = dh;
    if (dir_) d_input->bottomRows(3) = weight(*dir_).transpose() * d_main.topRows(3);
  }
  return grad;
}

std::vector<IntervalPrediction> FieldNetwork::predictions(const NetworkOutput& out) const {
  const Eigen::Index n = out.main.cols();
  std::vector<IntervalPrediction> p(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    auto& q = p[static_cast<std::size_t>(j)];
    for (int c = 0; c < 3; ++c) q.color[c] = sigmoid(out.main(c, j));
    q.density = softplus(out.main(kDensityRow, j));
    if (out.distribution.size() > 0) {
      q.has_distribution = true;
      q.mu_raw = out.distribution(0, j);
      q.sigma_raw = out.distribution(1, j);
      q.mu_rel = sigmoid(q.mu_raw);
      q.sigma_rel = std::max(sigmoid(q.sigma_raw), kSigmaRelMin);
    }
  }
  return p;
}

std::vector<IntervalPrediction> FieldNetwork::query(std::span<const IntervalQuery> queries) const {
  return predictions(forward(features(queries)));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
constexpr std::uint32_t kNetworkKind = 1;
}

void write_network_block(ByteWriter& out, const FieldNetwork& net) {
  const auto& cfg = net.config();
  out.u32(static_cast<std::uint32_t>(cfg.encoding.num_frequencies));
  out.u8(cfg.encoding.include_input ? 1 : 0);
  out.u8(cfg.use_direction ? 1 : 0);
  out.u8(cfg.distribution_head ? 1 : 0);
  out.u32(static_cast<std::uint32_t>(cfg.hidden_layers));
  out.u32(static_cast<std::uint32_t>(cfg.hidden_width));
  const auto dims = net.layer_dims();
  out.u32(static_cast<std::uint32_t>(dims.size()));
  for (auto [r, c] : dims) {
    out.u32(static_cast<std::uint32_t>(r));
    out.u32(static_cast<std::uint32_t>(c));
  }
  out.u64(net.parameter_count());
  out.f64s(net.parameters());
}

FieldNetwork read_network_block(ByteReader& in) {
  NetworkConfig cfg;
  cfg.encoding.num_frequencies = static_cast<int>(in.u32());
  cfg.encoding.include_input = in.u8() != 0;
  cfg.use_direction = in.u8() != 0;
  cfg.distribution_head = in.u8() != 0;
  cfg.hidden_layers = static_cast<int>(in.u32());
  cfg.hidden_width = static_cast<int>(in.u32());
  if (cfg.hidden_layers < 1 || cfg.hidden_layers > 64 || cfg.hidden_width < 1 || cfg.hidden_width > 4096 ||
      cfg.encoding.num_frequencies > 32)
    throw std::runtime_error("checkpoint: implausible network configuration");
  FieldNetwork net(cfg, 0);
  const auto expected = net.layer_dims();
  const auto count = in.u32();
  if (count != expected.size()) throw std::runtime_error("checkpoint: layer count mismatch");
  for (auto [r, c] : expected) {
    const auto rr = in.u32(), cc = in.u32();
    if (rr != static_cast<std::uint32_t>(r) || cc != static_cast<std::uint32_t>(c))
      throw std::runtime_error("checkpoint: layer dimension mismatch");
  }
  const auto n = in.u64();
  if (n != net.parameter_count()) throw std::runtime_error("checkpoint: parameter count mismatch");
  {
    const auto v = in.f64s(n);
    net.params_.assign(v.begin(), v.end());
  }
  return net;
}

void save_network(const std::filesystem::path& path, const FieldNetwork& net) {
  ByteWriter w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u32(kNetworkKind);
  write_network_block(w, net);
  write_file_atomic(path, w.bytes());
}

FieldNetwork load_network(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) throw std::runtime_error(path.string() + ": not a DDNF file");
  if (r.u32() != kCheckpointVersion) throw std::runtime_error(path.string() + ": unsupported version");
  if (r.u32() != kNetworkKind) throw std::runtime_error(path.string() + ": not a network checkpoint");
  auto net = read_network_block(r);
  if (!r.at_end()) throw std::runtime_error(path.string() + ": trailing bytes");
  return net;
}

}  // namespace ddnerf

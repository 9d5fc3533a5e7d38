#include "ddnerf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ddnerf/keyvalue.hpp"
#include "ddnerf/serialize.hpp"

namespace ddnerf {

const char* variant_name(Variant v) { return v == Variant::dd ? "dd" : "baseline"; }

Variant parse_variant(const std::string& s) {
  if (s == "dd") return Variant::dd;
  if (s == "baseline") return Variant::baseline;
  throw std::invalid_argument("unknown variant '" + s + "' (expected dd or baseline)");
}

NetworkConfig TrainConfig::coarse_network() const {
  NetworkConfig n = network;
  n.distribution_head = variant == Variant::dd;
  return n;
}

NetworkConfig TrainConfig::fine_network() const {
  NetworkConfig n = network;
  n.distribution_head = false;
  return n;
}

PassOptions TrainConfig::pass_options(std::uint64_t step, bool training) const {
  PassOptions o;
  o.training = training;
  if (variant == Variant::baseline) {
    o.sampler = SamplerKind::piecewise_constant;
    return o;
  }
  o.sampler = SamplerKind::mixture;
  if (force_uniform_mixture) {
    o.forced_mu_rel = 0.5;
    o.forced_sigma_rel = 0.5;
    o.uncertainty = std::numeric_limits<double>::infinity();
  } else {
    o.uncertainty = training ? schedule().value(step) : 1.0;
  }
  return o;
}

void TrainConfig::validate() const {
  sampling.validate();
  loss.validate();
  if (batch_rays < 1) throw std::invalid_argument("batch must hold at least one ray");
  if (!(lr_start > 0.0) || !(lr_end > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (!(u_start >= 1.0)) throw std::invalid_argument("u_start must be at least 1");
  if (!(u_decay_fraction >= 0.0 && u_decay_fraction <= 1.0)) throw std::invalid_argument("u_decay_fraction must be in [0,1]");
  if (network.hidden_layers < 1 || network.hidden_width < 1 || network.encoding.num_frequencies < 0)
    throw std::invalid_argument("invalid network shape");
}

// ---------------------------------------------------------------------------
// key=value configuration

std::map<std::string, std::string> config_values(const TrainConfig& c) {
  const auto& s = c.sampling;
  return {
      {"variant", variant_name(c.variant)},
      {"n_coarse", std::to_string(s.n_coarse)},
      {"n_fine", std::to_string(s.n_fine)},
      {"near", format_double(s.near)},
      {"far", format_double(s.far)},
      {"jitter", format_bool(s.jitter)},
      {"unbounded", format_bool(s.unbounded)},
      {"seed", std::to_string(s.seed)},
      {"background", format_vec3(s.background)},
      {"lambda_de", format_double(c.loss.lambda_de)},
      {"lambda_mu", format_double(c.loss.lambda_mu)},
      {"lambda_sigma", format_double(c.loss.lambda_sigma)},
      {"kl_epsilon", format_double(c.loss.kl_epsilon)},
      {"de_through_weights", format_bool(c.loss.de_through_weights)},
      {"kl_direction", c.loss.kl_direction == KlDirection::estimate_first ? "estimate_first" : "target_first"},
      {"frequencies", std::to_string(c.network.encoding.num_frequencies)},
      {"include_input", format_bool(c.network.encoding.include_input)},
      {"layers", std::to_string(c.network.hidden_layers)},
      {"width", std::to_string(c.network.hidden_width)},
      {"use_direction", format_bool(c.network.use_direction)},
      {"batch", std::to_string(c.batch_rays)},
      {"iterations", std::to_string(c.iterations)},
      {"lr_start", format_double(c.lr_start)},
      {"lr_end", format_double(c.lr_end)},
      {"u_start", format_double(c.u_start)},
      {"u_decay_fraction", format_double(c.u_decay_fraction)},
      {"force_uniform_mixture", format_bool(c.force_uniform_mixture)},
      {"image_width", std::to_string(c.image_width)},
      {"image_height", std::to_string(c.image_height)},
  };
}

void apply_config_values(TrainConfig& c, const std::map<std::string, std::string>& values) {
  auto& s = c.sampling;
  for (const auto& [k, v] : values) {
    if (k == "variant") c.variant = parse_variant(v);
    else if (k == "n_coarse") s.n_coarse = parse_uint(k, v);
    else if (k == "n_fine") s.n_fine = parse_uint(k, v);
    else if (k == "near") s.near = parse_double(k, v);
    else if (k == "far") s.far = parse_double(k, v);
    else if (k == "jitter") s.jitter = parse_bool(k, v);
    else if (k == "unbounded") s.unbounded = parse_bool(k, v);
    else if (k == "seed") s.seed = parse_uint(k, v);
    else if (k == "background") s.background = parse_vec3(k, v);
    else if (k == "lambda_de") c.loss.lambda_de = parse_double(k, v);
    else if (k == "lambda_mu") c.loss.lambda_mu = parse_double(k, v);
    else if (k == "lambda_sigma") c.loss.lambda_sigma = parse_double(k, v);
    else if (k == "kl_epsilon") c.loss.kl_epsilon = parse_double(k, v);
    else if (k == "de_through_weights") c.loss.de_through_weights = parse_bool(k, v);
    else if (k == "kl_direction") {
      if (v == "estimate_first") c.loss.kl_direction = KlDirection::estimate_first;
      else if (v == "target_first") c.loss.kl_direction = KlDirection::target_first;
      else throw std::invalid_argument("config key 'kl_direction': expected estimate_first or target_first");
    } else if (k == "frequencies") c.network.encoding.num_frequencies = static_cast<int>(parse_uint(k, v));
    else if (k == "include_input") c.network.encoding.include_input = parse_bool(k, v);
    else if (k == "layers") c.network.hidden_layers = static_cast<int>(parse_uint(k, v));
    else if (k == "width") c.network.hidden_width = static_cast<int>(parse_uint(k, v));
    else if (k == "use_direction") c.network.use_direction = parse_bool(k, v);
    else if (k == "batch") c.batch_rays = parse_uint(k, v);
    else if (k == "iterations") c.iterations = parse_uint(k, v);
    else if (k == "lr_start") c.lr_start = parse_double(k, v);
    else if (k == "lr_end") c.lr_end = parse_double(k, v);
    else if (k == "u_start") c.u_start = parse_double(k, v);
    else if (k == "u_decay_fraction") c.u_decay_fraction = parse_double(k, v);
    else if (k == "force_uniform_mixture") c.force_uniform_mixture = parse_bool(k, v);
    else if (k == "image_width") c.image_width = static_cast<int>(parse_uint(k, v));
    else if (k == "image_height") c.image_height = static_cast<int>(parse_uint(k, v));
    else throw std::invalid_argument("unknown config key '" + k + "'");
  }
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_values(cfg)) out += k + " = " + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// State and steps

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

TrainState make_train_state(const TrainConfig& cfg) {
  cfg.validate();
  const std::uint64_t seed = cfg.sampling.seed;
  TrainState s{cfg,
               FieldNetwork(cfg.coarse_network(), splitmix(seed ^ 0x636f61727365ULL)),
               FieldNetwork(cfg.fine_network(), splitmix(seed ^ 0x66696e65ULL)),
               AdamState(),
               AdamState(),
               0,
               std::mt19937_64(splitmix(seed ^ 0x72617973ULL))};
  s.adam_coarse = AdamState(s.coarse.parameter_count());
  s.adam_fine = AdamState(s.fine.parameter_count());
  return s;
}

std::vector<std::size_t> sample_batch(TrainState& state, std::size_t pool_size) {
  if (pool_size == 0) throw std::invalid_argument("no training rays");
  std::uniform_int_distribution<std::size_t> pick(0, pool_size - 1);
  std::vector<std::size_t> idx(state.config.batch_rays);
  for (auto& i : idx) i = pick(state.rng);
  return idx;
}

namespace {

// Field callback that records the batched forward pass for the backward step.
struct RecordingField {
  const FieldNetwork& net;
  ForwardTape tape;
  NetworkOutput out;

  FieldFn fn() {
    return [this](std::span<const IntervalQuery> q) {
      out = net.forward(net.features(q), &tape);
      if (!out.main.allFinite() || (out.distribution.size() > 0 && !out.distribution.allFinite()))
        throw NumericalError("non-finite network output");
      return net.predictions(out);
    };
  }
};

TrainGradient run_batch(const TrainState& state, std::span<const Ray> rays, std::span<const Rgb> gt,
                        std::mt19937_64& rng, bool with_gradient) {
  if (rays.empty()) throw std::invalid_argument("train_step: empty ray batch");
  if (gt.size() != rays.size()) throw std::invalid_argument("train_step: colors do not match rays");
  const TrainConfig& cfg = state.config;
  const PassOptions opts = cfg.pass_options(state.step, true);
  const bool de_on = cfg.variant == Variant::dd && cfg.loss.lambda_de > 0.0;

  RecordingField coarse{state.coarse, {}, {}};
  RecordingField fine{state.fine, {}, {}};
  const auto cr = run_coarse(rays, coarse.fn(), cfg.sampling, opts, rng);
  const auto fr = run_fine(rays, cr, fine.fn(), cfg.sampling, opts, rng);

  const std::size_t nc = cfg.sampling.n_coarse, nf = cfg.sampling.n_fine;
  const double inv_b = 1.0 / static_cast<double>(rays.size());
  Eigen::MatrixXd d_coarse = Eigen::MatrixXd::Zero(4, coarse.out.main.cols());
  Eigen::MatrixXd d_dist;
  if (de_on) d_dist = Eigen::MatrixXd::Zero(2, coarse.out.main.cols());
  Eigen::MatrixXd d_fine = Eigen::MatrixXd::Zero(4, fine.out.main.cols());

  TrainGradient g;
  LossReport& rep = g.report;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto c0 = static_cast<Eigen::Index>(r * nc);
    const auto f0 = static_cast<Eigen::Index>(r * nf);
    const Eigen::MatrixXd main_c = coarse.out.main.middleCols(c0, static_cast<Eigen::Index>(nc));
    const Eigen::MatrixXd main_f = fine.out.main.middleCols(f0, static_cast<Eigen::Index>(nf));
    Eigen::MatrixXd dist;
    if (de_on) dist = coarse.out.distribution.middleCols(c0, static_cast<Eigen::Index>(nc));

    const RayLoss lc = coarse_ray_loss(cr[r].samples.intervals, main_c, de_on ? &dist : nullptr, gt[r],
                                       &fr[r].samples.intervals, &fr[r].h_fine, cfg.loss, cfg.sampling.background,
                                       with_gradient);
    const RayLoss lf = fine_ray_loss(fr[r].samples.intervals, main_f, gt[r], cfg.sampling.background, with_gradient);
    rep.photometric_coarse += lc.photometric;
    rep.photometric_fine += lf.photometric;
    rep.kl_term += lc.de.kl;
    rep.mu_reg += lc.de.mu_reg;
    rep.sigma_reg += lc.de.sigma_reg;
    if (with_gradient) {
      d_coarse.middleCols(c0, static_cast<Eigen::Index>(nc)) = lc.d_main * inv_b;
      d_fine.middleCols(f0, static_cast<Eigen::Index>(nf)) = lf.d_main * inv_b;
      if (de_on && lc.d_distribution.size() > 0)
        d_dist.middleCols(c0, static_cast<Eigen::Index>(nc)) = lc.d_distribution * inv_b;
    }
  }
  rep.photometric_coarse *= inv_b;
  rep.photometric_fine *= inv_b;
  rep.kl_term *= inv_b;
  rep.mu_reg *= inv_b;
  rep.sigma_reg *= inv_b;
  const double de = rep.kl_term + rep.mu_reg + rep.sigma_reg;
  rep.total = total_loss(rep.photometric_coarse + rep.photometric_fine, de_on ? de : 0.0, cfg.loss);

  if (with_gradient) {
    g.coarse = state.coarse.backward(coarse.tape, d_coarse, de_on ? &d_dist : nullptr);
    g.fine = state.fine.backward(fine.tape, d_fine, nullptr);
  }
  return g;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

TrainGradient compute_gradient(const TrainState& state, std::span<const Ray> rays, std::span<const Rgb> gt,
                               std::mt19937_64& rng) {
  return run_batch(state, rays, gt, rng, true);
}

LossReport evaluate_loss(const TrainState& state, std::span<const Ray> rays, std::span<const Rgb> gt,
                         std::mt19937_64& rng) {
  return run_batch(state, rays, gt, rng, false).report;
}

LossReport train_step(TrainState& state, std::span<const Ray> rays, std::span<const Rgb> gt) {
  std::mt19937_64 rng = state.rng;
  TrainGradient g = run_batch(state, rays, gt, rng, true);
  if (!std::isfinite(g.report.total) || !all_finite(g.coarse) || !all_finite(g.fine)) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "non-finite loss at step %llu: total=%g photometric_coarse=%g photometric_fine=%g kl=%g mu_reg=%g "
                  "sigma_reg=%g",
                  static_cast<unsigned long long>(state.step), g.report.total, g.report.photometric_coarse,
                  g.report.photometric_fine, g.report.kl_term, g.report.mu_reg, g.report.sigma_reg);
    throw NumericalError(buf);
  }
  const TrainConfig& cfg = state.config;
  const double lr = exponential_decay(cfg.lr_start, cfg.lr_end, state.step, cfg.iterations);
  adam_update(state.coarse.parameters(), g.coarse, state.adam_coarse, lr);
  adam_update(state.fine.parameters(), g.fine, state.adam_fine, lr);
  state.rng = rng;
  ++state.step;
  return g.report;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::uint32_t kTrainStateKind = 2;

void write_adam(ByteWriter& w, const AdamState& a) {
  w.u64(a.t);
  w.u64(a.m.size());
  w.f64s(a.m);
  w.f64s(a.v);
}

AdamState read_adam(ByteReader& r) {
  AdamState a;
  a.t = r.u64();
  const auto n = r.u64();
  if (n > r.remaining() / 16) throw std::runtime_error("checkpoint: truncated optimizer state");
  a.m = r.f64s(n);
  a.v = r.f64s(n);
  return a;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  ByteWriter w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u32(kTrainStateKind);
  w.str(format_config(state.config));
  w.u64(state.step);
  std::ostringstream rng;
  rng << state.rng;
  w.str(rng.str());
  write_network_block(w, state.coarse);
  write_network_block(w, state.fine);
  write_adam(w, state.adam_coarse);
  write_adam(w, state.adam_fine);
  write_file_atomic(path, w.bytes());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  const auto magic = r.take(sizeof kCheckpointMagic);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic))
    throw std::runtime_error(path.string() + ": not a DDNF checkpoint");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  if (r.u32() != kTrainStateKind) throw std::runtime_error(path.string() + ": not a training checkpoint");
  TrainConfig cfg;
  apply_config_values(cfg, parse_key_values(r.str()));
  TrainState s = make_train_state(cfg);
  s.step = r.u64();
  std::istringstream rng(r.str());
  rng >> s.rng;
  if (rng.fail()) throw std::runtime_error(path.string() + ": corrupt generator state");
  s.coarse = read_network_block(r);
  s.fine = read_network_block(r);
  s.adam_coarse = read_adam(r);
  s.adam_fine = read_adam(r);
  if (!r.at_end()) throw std::runtime_error(path.string() + ": trailing bytes in checkpoint");
  if (s.coarse.config() != cfg.coarse_network() || s.fine.config() != cfg.fine_network() ||
      s.adam_coarse.m.size() != s.coarse.parameter_count() || s.adam_fine.m.size() != s.fine.parameter_count())
    throw std::runtime_error(path.string() + ": checkpoint contents do not match its configuration");
  return s;
}

}  // namespace ddnerf

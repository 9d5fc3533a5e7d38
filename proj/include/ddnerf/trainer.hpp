#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddnerf/adam.hpp"
#include "ddnerf/keyvalue.hpp"
#include "ddnerf/losses.hpp"
#include "ddnerf/pipeline.hpp"
#include "ddnerf/radiance_field.hpp"
#include "ddnerf/sampling.hpp"

namespace ddnerf {

enum class Variant {
  /// Distribution heads, mixture sampling and the DE loss.
  dd,
  /// No distribution heads, piecewise-constant sampling, no DE loss.
  baseline,
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct TrainConfig {
  Variant variant = Variant::dd;
  SamplingConfig sampling;
  LossConfig loss = LossConfig::defaults_for(64);
  /// Shared by both models; the coarse model gains the distribution head
  /// in the dd variant.
  NetworkConfig network;
  std::size_t batch_rays = 512;
  std::uint64_t iterations = 10000;
  double lr_start = 5e-4;
  double lr_end = 5e-5;
  double u_start = 3.0;
  double u_decay_fraction = 0.5;
  /// dd variant only: ignore the distribution heads and sample a mixture of
  /// centred, infinitely wide Gaussians.
  bool force_uniform_mixture = false;
  /// Resolution of the training images (0 when unknown); evaluation
  /// rejects datasets of another resolution.
  int image_width = 0;
  int image_height = 0;

  NetworkConfig coarse_network() const;
  NetworkConfig fine_network() const;
  UncertaintySchedule schedule() const { return {u_start, u_decay_fraction, iterations}; }
  /// Options for a training pass at the given step.
  PassOptions pass_options(std::uint64_t step, bool training) const;
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Flat key=value form with round-trip precision; apply_config_values
/// accepts any subset of the keys and rejects unknown ones.
std::map<std::string, std::string> config_values(const TrainConfig& cfg);
void apply_config_values(TrainConfig& cfg, const std::map<std::string, std::string>& values);
std::string format_config(const TrainConfig& cfg);

struct TrainState {
  TrainConfig config;
  FieldNetwork coarse;
  FieldNetwork fine;
  AdamState adam_coarse;
  AdamState adam_fine;
  std::uint64_t step = 0;
  std::mt19937_64 rng;

  bool operator==(const TrainState&) const = default;
};

/// Fresh networks and optimizer state seeded from config.sampling.seed. The
/// coarse models of both variants share their trunk initialization.
TrainState make_train_state(const TrainConfig& cfg);

/// Raised when a step produces a non-finite loss; the state is left as it
/// was before the step.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One optimization step on a ray batch with ground-truth colors.
LossReport train_step(TrainState& state, std::span<const Ray> rays, std::span<const Rgb> gt);

/// Loss of a batch at the current parameters without updating anything.
/// Consumes randomness exactly like train_step.
LossReport evaluate_loss(const TrainState& state, std::span<const Ray> rays, std::span<const Rgb> gt,
                         std::mt19937_64& rng);

/// Full parameter gradients of the training loss with the sampling held
/// fixed by rng. Used by train_step and the gradient checks.
struct TrainGradient {
  LossReport report;
  std::vector<double> coarse;
  std::vector<double> fine;
};
TrainGradient compute_gradient(const TrainState& state, std::span<const Ray> rays, std::span<const Rgb> gt,
                               std::mt19937_64& rng);

/// Uniformly random indices into a pool of training rays, drawn from the
/// state's generator.
std::vector<std::size_t> sample_batch(TrainState& state, std::size_t pool_size);

/// Binary checkpoint: "DDNF", version, kind 2, the resolved configuration,
/// step, generator state, both networks and both optimizer states.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace ddnerf

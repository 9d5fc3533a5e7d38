#include "ddnerf/adam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddnerf {

void adam_update(std::span<double> params, std::span<const double> grad, AdamState& state, double lr,
                 const AdamConfig& cfg) {
  if (grad.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_update: size mismatch");
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.epsilon);
  }
}

double exponential_decay(double lr_start, double lr_end, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps == 0) return lr_end;
  const double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return lr_start * std::pow(lr_end / lr_start, f);
}

}  // namespace ddnerf

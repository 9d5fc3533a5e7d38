#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ddnerf {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

/// First and second moment estimates plus the update count.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update of params in place.
void adam_update(std::span<double> params, std::span<const double> grad, AdamState& state, double lr,
                 const AdamConfig& cfg = {});

/// lr_start * (lr_end / lr_start)^(step / total_steps), held at lr_end past
/// the end.
double exponential_decay(double lr_start, double lr_end, std::uint64_t step, std::uint64_t total_steps);

}  // namespace ddnerf

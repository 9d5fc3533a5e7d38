#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ddnerf/serialize.hpp"
#include "ddnerf/volume_rendering.hpp"

namespace ddnerf {

using Vec3 = Eigen::Vector3d;

// ---------------------------------------------------------------------------
// Positional encoding

struct EncodingConfig {
  int num_frequencies = 6;
  bool include_input = true;

  int output_dim(int input_dim = 3) const { return input_dim * (2 * num_frequencies + (include_input ? 1 : 0)); }
  bool operator==(const EncodingConfig&) const = default;
};

/// Layout: [x (if included), sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x),
/// cos(2^{L-1} pi x)], each block holding all three components.
Eigen::VectorXd encode(const Vec3& x, const EncodingConfig& cfg);
void encode_into(const Vec3& x, const EncodingConfig& cfg, double* out);
/// Chain rule through encode(): returns dL/dx given dL/d(features).
Vec3 encode_backward(const Vec3& x, const EncodingConfig& cfg, const double* d_features);

// ---------------------------------------------------------------------------
// Field queries

/// One ray interval presented to a field: its midpoint, the unit ray
/// direction and the interval length.
struct IntervalQuery {
  Vec3 position = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double length = 0.0;
};

struct IntervalPrediction {
  Rgb color = Rgb::Zero();
  double density = 0.0;
  double mu_raw = 0.0;
  double sigma_raw = 0.0;
  double mu_rel = 0.5;
  double sigma_rel = 1.0;
  bool has_distribution = false;
};

// ---------------------------------------------------------------------------
// Network

struct NetworkConfig {
  EncodingConfig encoding;
  int hidden_layers = 8;
  int hidden_width = 128;
  bool use_direction = true;
  /// Adds the (mu_raw, sigma_raw) head used by the coarse model.
  bool distribution_head = false;

  /// Encoded position and interval length; these alone determine density
  /// and the distribution outputs.
  int trunk_input_dim() const { return encoding.output_dim() + 1; }
  /// Trunk input followed by the unit direction when use_direction is set.
  int input_dim() const { return trunk_input_dim() + (use_direction ? 3 : 0); }
  bool operator==(const NetworkConfig&) const = default;
};

/// Row of the density pre-activation in NetworkOutput::main (rows 0-2 are
/// color logits).
inline constexpr int kDensityRow = 3;

/// Activations recorded by a forward pass.
struct ForwardTape {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> hidden;
  bool recorded = false;
};

struct NetworkOutput {
  /// 4 x N: color logits and density pre-activation.
  Eigen::MatrixXd main;
  /// 2 x N distribution head, empty without the head.
  Eigen::MatrixXd distribution;
};

/// ReLU MLP over the encoded position and interval length with a
/// color/density head and an optional distribution head. The direction adds
/// a linear term to the color logits only. Parameters are stored in one
/// contiguous vector; copies are independent.
class FieldNetwork {
 public:
  FieldNetwork() = default;
  FieldNetwork(const NetworkConfig& cfg, std::uint64_t seed);

  const NetworkConfig& config() const { return cfg_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  /// Number of leading parameters shared with a network built without the
  /// distribution head (trunk and color/density head).
  std::size_t shared_parameter_count() const { return shared_count_; }
  /// (rows, cols) of every weight matrix in storage order.
  std::vector<std::pair<int, int>> layer_dims() const;

  /// Input matrix (input_dim x N) for a batch of interval queries.
  Eigen::MatrixXd features(std::span<const IntervalQuery> queries) const;

  NetworkOutput forward(const Eigen::MatrixXd& input, ForwardTape* tape = nullptr) const;

  /// Reverse pass. d_distribution may be null (no gradient reaches the
  /// distribution head). Returns the parameter gradient; fills d_input when
  /// requested. Throws std::logic_error without a recorded tape.
  std::vector<double> backward(const ForwardTape& tape, const Eigen::MatrixXd& d_main,
                               const Eigen::MatrixXd* d_distribution, Eigen::MatrixXd* d_input = nullptr) const;

  /// Applies the output activations: sigmoid colors, softplus density and
  /// sigmoid relative distribution parameters (sigma floored).
  std::vector<IntervalPrediction> predictions(const NetworkOutput& out) const;

  std::vector<IntervalPrediction> query(std::span<const IntervalQuery> queries) const;

  bool operator==(const FieldNetwork&) const = default;

 private:
  friend FieldNetwork read_network_block(ByteReader& in);

  struct Layer {
    int rows = 0, cols = 0;
    std::size_t weight_offset = 0, bias_offset = 0;
    bool operator==(const Layer&) const = default;
  };
  Eigen::Map<const Eigen::MatrixXd> weight(const Layer& l) const;
  Eigen::Map<const Eigen::VectorXd> bias(const Layer& l) const;
  Layer add_layer(int rows, int cols);
  void init_layer(const Layer& l, double bound, std::mt19937_64& rng);

  NetworkConfig cfg_;
  // Aligned so vectorized reductions over the layer maps see the same
  // alignment on every run and give bit-identical results.
  std::vector<double, Eigen::aligned_allocator<double>> params_;
  std::vector<Layer> trunk_;
  Layer head_;
  /// 3 x 3 direction-to-color weights.
  std::optional<Layer> dir_;
  std::optional<Layer> dist_head_;
  std::size_t shared_count_ = 0;
};

/// Network block of the "DDNF" checkpoint format: encoding and layer
/// configuration, every weight matrix's dimensions and the parameters as
/// little-endian 64-bit floats.
void write_network_block(ByteWriter& out, const FieldNetwork& net);
FieldNetwork read_network_block(ByteReader& in);

void save_network(const std::filesystem::path& path, const FieldNetwork& net);
FieldNetwork load_network(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Analytic scenes

struct Primitive {
  enum class Kind { sphere, box, shell };
  Kind kind = Kind::sphere;
  Vec3 center = Vec3::Zero();
  /// Sphere radius, or inner radius of a shell.
  double radius = 1.0;
  /// Shell thickness.
  double thickness = 0.0;
  /// Box half extents.
  Vec3 half_extent = Vec3::Ones();
  double density = 50.0;
  Rgb color = Rgb::Constant(0.5);
  /// Optional procedural pattern: color blends towards color2 by
  /// 0.5 + 0.5 sin(f x) cos(f y) cos(f z); f = 0 disables it.
  Rgb color2 = Rgb::Zero();
  double pattern_frequency = 0.0;

  /// Signed distance to the surface, negative inside.
  double signed_distance(const Vec3& p) const;
  /// Width of the smooth density falloff around the surface.
  double falloff_width() const;
  /// Occupancy in [0,1] with a C1 ramp across the falloff band.
  double occupancy(const Vec3& p) const;
  Rgb color_at(const Vec3& p) const;
};

/// Closed-form density field used as ground truth and as a drop-in field.
class AnalyticField {
 public:
  AnalyticField() = default;
  explicit AnalyticField(std::vector<Primitive> primitives) : primitives_(std::move(primitives)) {}

  const std::vector<Primitive>& primitives() const { return primitives_; }
  double density(const Vec3& p) const;
  /// Density-weighted mix of primitive colors (black in empty space).
  Rgb color(const Vec3& p) const;
  /// Point density and color in one pass.
  std::pair<double, Rgb> sample(const Vec3& p) const;

  /// Interval query by 64-point midpoint quadrature: mean density,
  /// density-weighted color and the mean / s.t.d. of the within-interval
  /// influence profile (relative to the interval length). Empty intervals
  /// give mu_rel = 0.5 and sigma_rel = kSigmaRelMin.
  IntervalPrediction query(const IntervalQuery& q) const;
  std::vector<IntervalPrediction> query(std::span<const IntervalQuery> queries) const;

  static constexpr int kQuadraturePoints = 64;

 private:
  std::vector<Primitive> primitives_;
};

}  // namespace ddnerf

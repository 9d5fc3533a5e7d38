#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddnerf/image.hpp"
#include "ddnerf/radiance_field.hpp"
#include "ddnerf/sampling.hpp"

namespace ddnerf {

/// Pinhole camera looking from position towards look_at.
struct CameraModel {
  Vec3 position = Vec3(0.0, 0.0, 4.0);
  Vec3 look_at = Vec3::Zero();
  Vec3 up = Vec3::UnitY();
  /// Vertical field of view in radians, in (0, pi).
  double fov_y = 0.7;
  int width = 64;
  int height = 64;
  double near = 2.0;
  double far = 6.0;

  struct Basis {
    Vec3 forward, right, up;
  };
  /// Orthonormal right-handed frame; throws when up is parallel to the view.
  Basis basis() const;
  void validate() const;
  bool operator==(const CameraModel&) const = default;
};

/// Ray through the center of pixel (x, y); y grows downwards.
Ray generate_ray(const CameraModel& cam, int x, int y);
/// All pixel rays in row-major order.
std::vector<Ray> camera_rays(const CameraModel& cam);

enum class CameraRig {
  /// Full circle around the target.
  circle,
  /// Forward-facing arc.
  arc,
};

struct SceneSpec {
  std::string name;
  AnalyticField field;
  Rgb background = Rgb::Zero();
  double near = 2.0;
  double far = 6.0;
  bool unbounded = false;
  CameraRig rig = CameraRig::circle;
  int camera_count = 20;
  double rig_radius = 4.0;
  double rig_height = 1.0;
  /// Total angle covered by an arc rig, radians.
  double arc_span = 1.0;
  double fov_y = 0.7;
};

/// wall, spheres, cluttered and unbounded.
std::vector<SceneSpec> build_standard_scenes();
std::optional<SceneSpec> find_standard_scene(const std::string& name);
std::vector<std::string> standard_scene_names();

/// Camera rig of the scene at the given resolution.
std::vector<CameraModel> make_cameras(const SceneSpec& scene, int width, int height);

/// Text form: scene-level "key = value" lines followed by one
/// "primitive kind=... key=value ..." line per primitive.
std::string format_scene(const SceneSpec& scene);
SceneSpec parse_scene(const std::string& text);

struct RayGroundTruth {
  Rgb color = Rgb::Zero();
  /// Expected depth of the normalized dense weights, far when empty.
  double depth = 0.0;
};

/// Dense point-sampled ray march with n_quad uniform intervals.
RayGroundTruth ground_truth_ray(const AnalyticField& field, const Ray& ray, const Rgb& background, std::size_t n_quad);

struct GroundTruth {
  Image rgb;
  Image depth;
};

GroundTruth render_ground_truth(const SceneSpec& scene, const CameraModel& cam, std::size_t n_quad = 1024);

struct SyntheticDataset {
  SceneSpec scene;
  std::vector<CameraModel> cameras;
  /// 8-bit quantized renders.
  std::vector<Image> images;
  /// Depth maps quantized to the 16-bit grid of depth_scale.
  std::vector<Image> depths;
  double depth_scale = 6.0;
  std::size_t n_quad = 1024;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Renders every camera of the scene rig. Every tenth image (index % 10 ==
/// 5) is held out for validation.
SyntheticDataset generate_dataset(const SceneSpec& scene, int width, int height, std::size_t n_quad = 1024);

/// Directory layout: manifest.txt, scene.txt, cameras/cam_%03d.txt,
/// images/img_%03d.ppm, depth/dep_%03d.pgm.
void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds);
SyntheticDataset read_dataset(const std::filesystem::path& dir);

std::string format_camera(const CameraModel& cam);
CameraModel parse_camera(const std::string& text);

}  // namespace ddnerf

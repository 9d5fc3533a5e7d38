#include "ddnerf/scene.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "ddnerf/keyvalue.hpp"
#include "ddnerf/parallel.hpp"
#include "ddnerf/serialize.hpp"
#include "ddnerf/volume_rendering.hpp"

namespace ddnerf {

// ---------------------------------------------------------------------------
// Cameras

CameraModel::Basis CameraModel::basis() const {
  const Vec3 f = look_at - position;
  if (!(f.norm() > 0.0)) throw std::invalid_argument("camera position coincides with look-at point");
  Basis b;
  b.forward = f.normalized();
  const Vec3 r = b.forward.cross(up);
  if (!(r.norm() > 1e-12)) throw std::invalid_argument("camera up vector is parallel to the view direction");
  b.right = r.normalized();
  b.up = b.right.cross(b.forward);
  return b;
}

void CameraModel::validate() const {
  if (!(fov_y > 0.0 && fov_y < std::numbers::pi)) throw std::invalid_argument("camera fov must be in (0, pi)");
  if (width < 1 || height < 1) throw std::invalid_argument("camera resolution must be positive");
  if (!(near < far)) throw std::invalid_argument("camera needs near < far");
  basis();
}

Ray generate_ray(const CameraModel& cam, int x, int y) {
  if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) throw std::out_of_range("pixel outside the image");
  const auto b = cam.basis();
  const double tan_half = std::tan(0.5 * cam.fov_y);
  const double aspect = static_cast<double>(cam.width) / cam.height;
  const double sx = (2.0 * (x + 0.5) / cam.width - 1.0) * tan_half * aspect;
  const double sy = (1.0 - 2.0 * (y + 0.5) / cam.height) * tan_half;
  Ray r;
  r.origin = cam.position;
  r.direction = (b.forward + sx * b.right + sy * b.up).normalized();
  r.near = cam.near;
  r.far = cam.far;
  return r;
}

std::vector<Ray> camera_rays(const CameraModel& cam) {
  cam.validate();
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) rays.push_back(generate_ray(cam, x, y));
  return rays;
}

std::vector<CameraModel> make_cameras(const SceneSpec& scene, int width, int height) {
  std::vector<CameraModel> cams;
  const int n = scene.camera_count;
  for (int i = 0; i < n; ++i) {
    double angle;
    if (scene.rig == CameraRig::circle) {
      angle = 2.0 * std::numbers::pi * i / n;
    } else {
      angle = n > 1 ? -0.5 * scene.arc_span + scene.arc_span * i / (n - 1) : 0.0;
    }
    CameraModel c;
    c.position = Vec3(scene.rig_radius * std::sin(angle), scene.rig_height, scene.rig_radius * std::cos(angle));
    c.look_at = Vec3::Zero();
    c.up = Vec3::UnitY();
    c.fov_y = scene.fov_y;
    c.width = width;
    c.height = height;
    c.near = scene.near;
    c.far = scene.far;
    cams.push_back(c);
  }
  return cams;
}

// ---------------------------------------------------------------------------
// Standard scenes

namespace {

Primitive sphere(Vec3 center, double radius, double density, Rgb color, Rgb color2 = Rgb::Zero(), double freq = 0.0) {
  Primitive p;
  p.kind = Primitive::Kind::sphere;
  p.center = center;
  p.radius = radius;
  p.density = density;
  p.color = color;
  p.color2 = color2;
  p.pattern_frequency = freq;
  return p;
}

Primitive box(Vec3 center, Vec3 half, double density, Rgb color, Rgb color2 = Rgb::Zero(), double freq = 0.0) {
  Primitive p;
  p.kind = Primitive::Kind::box;
  p.center = center;
  p.half_extent = half;
  p.density = density;
  p.color = color;
  p.color2 = color2;
  p.pattern_frequency = freq;
  return p;
}

SceneSpec wall_scene() {
  SceneSpec s;
  s.name = "wall";
  s.field = AnalyticField({box(Vec3::Zero(), Vec3(6.0, 6.0, 0.05), 200.0, Rgb(0.9, 0.35, 0.2), Rgb(0.15, 0.3, 0.85),
                               6.0)});
  s.near = 1.0;
  s.far = 5.0;
  s.rig = CameraRig::arc;
  s.rig_radius = 3.0;
  s.rig_height = 0.0;
  s.arc_span = 60.0 * std::numbers::pi / 180.0;
  s.fov_y = 40.0 * std::numbers::pi / 180.0;
  return s;
}

SceneSpec spheres_scene() {
  SceneSpec s;
  s.name = "spheres";
  s.field = AnalyticField({
      sphere(Vec3(-0.7, 0.0, -0.5), 0.5, 40.0, Rgb(0.85, 0.2, 0.2), Rgb(0.95, 0.8, 0.3), 5.0),
      sphere(Vec3(0.6, 0.15, 0.3), 0.45, 40.0, Rgb(0.2, 0.75, 0.3), Rgb(0.1, 0.3, 0.2), 6.0),
      sphere(Vec3(-0.05, -0.25, 0.95), 0.35, 40.0, Rgb(0.25, 0.35, 0.9), Rgb(0.8, 0.85, 0.95), 7.0),
  });
  s.near = 2.0;
  s.far = 6.0;
  s.rig = CameraRig::circle;
  s.rig_radius = 4.0;
  s.rig_height = 1.0;
  s.fov_y = 40.0 * std::numbers::pi / 180.0;
  return s;
}

SceneSpec cluttered_scene() {
  SceneSpec s;
  s.name = "cluttered";
  std::vector<Primitive> p;
  const Rgb palette[5] = {Rgb(0.9, 0.3, 0.2), Rgb(0.2, 0.7, 0.3), Rgb(0.25, 0.35, 0.9), Rgb(0.9, 0.8, 0.2),
                          Rgb(0.7, 0.3, 0.8)};
  for (int i = 0; i < 10; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 10.0 + 0.3 * (i % 3);
    const double r = 0.35 + 0.45 * ((i * 7) % 10) / 10.0;
    const Vec3 c(r * std::cos(a), -0.4 + 0.09 * i, r * std::sin(a));
    const Rgb col = palette[i % 5];
    const Rgb col2 = Rgb::Ones() - col;
    if (i % 2 == 0)
      p.push_back(sphere(c, 0.14 + 0.02 * (i % 4), 60.0, col, col2, 12.0));
    else
      p.push_back(box(c, Vec3(0.12, 0.1 + 0.02 * (i % 3), 0.12), 60.0, col, col2, 12.0));
  }
  s.field = AnalyticField(std::move(p));
  s.near = 2.0;
  s.far = 6.0;
  s.rig = CameraRig::circle;
  s.rig_radius = 4.0;
  s.rig_height = 1.0;
  s.fov_y = 35.0 * std::numbers::pi / 180.0;
  return s;
}

SceneSpec unbounded_scene() {
  SceneSpec s;
  s.name = "unbounded";
  Primitive shell;
  shell.kind = Primitive::Kind::shell;
  shell.radius = 6.0;
  shell.thickness = 0.5;
  shell.density = 10.0;
  shell.color = Rgb(0.55, 0.7, 0.9);
  shell.color2 = Rgb(0.9, 0.9, 0.75);
  shell.pattern_frequency = 2.0;
  s.field = AnalyticField({
      sphere(Vec3(0.0, 0.0, 0.0), 0.45, 40.0, Rgb(0.85, 0.25, 0.2), Rgb(0.95, 0.85, 0.3), 6.0),
      box(Vec3(0.3, -0.5, 0.3), Vec3(0.25, 0.15, 0.25), 40.0, Rgb(0.2, 0.6, 0.3)),
      shell,
  });
  s.near = 0.2;
  s.far = 12.0;
  s.unbounded = true;
  s.rig = CameraRig::circle;
  s.rig_radius = 2.0;
  s.rig_height = 0.4;
  s.fov_y = 50.0 * std::numbers::pi / 180.0;
  return s;
}

}  // namespace

std::vector<SceneSpec> build_standard_scenes() { return {wall_scene(), spheres_scene(), cluttered_scene(), unbounded_scene()}; }

std::optional<SceneSpec> find_standard_scene(const std::string& name) {
  for (auto& s : build_standard_scenes())
    if (s.name == name) return s;
  return std::nullopt;
}

std::vector<std::string> standard_scene_names() {
  std::vector<std::string> names;
  for (const auto& s : build_standard_scenes()) names.push_back(s.name);
  return names;
}

// ---------------------------------------------------------------------------
// Scene text format

namespace {

const char* kind_name(Primitive::Kind k) {
  switch (k) {
    case Primitive::Kind::sphere:
      return "sphere";
    case Primitive::Kind::box:
      return "box";
    case Primitive::Kind::shell:
      return "shell";
  }
  return "?";
}

}  // namespace

std::string format_scene(const SceneSpec& s) {
  std::string out;
  out += "name = " + s.name + "\n";
  out += "background = " + format_vec3(s.background) + "\n";
  out += "near = " + format_double(s.near) + "\n";
  out += "far = " + format_double(s.far) + "\n";
  out += "unbounded = " + format_bool(s.unbounded) + "\n";
  out += std::string("rig = ") + (s.rig == CameraRig::circle ? "circle" : "arc") + "\n";
  out += "camera_count = " + std::to_string(s.camera_count) + "\n";
  out += "rig_radius = " + format_double(s.rig_radius) + "\n";
  out += "rig_height = " + format_double(s.rig_height) + "\n";
  out += "arc_span = " + format_double(s.arc_span) + "\n";
  out += "fov_y = " + format_double(s.fov_y) + "\n";
  for (const auto& p : s.field.primitives()) {
    out += std::string("primitive kind=") + kind_name(p.kind) + " center=" + format_vec3(p.center) +
           " radius=" + format_double(p.radius) + " thickness=" + format_double(p.thickness) +
           " half_extent=" + format_vec3(p.half_extent) + " density=" + format_double(p.density) +
           " color=" + format_vec3(p.color) + " color2=" + format_vec3(p.color2) +
           " pattern_frequency=" + format_double(p.pattern_frequency) + "\n";
  }
  return out;
}

SceneSpec parse_scene(const std::string& text) {
  SceneSpec s;
  std::string header;
  std::vector<Primitive> prims;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const std::string t = trim(line);
    if (t.rfind("primitive", 0) != 0) {
      header += line + "\n";
      continue;
    }
    Primitive p;
    std::stringstream ls(t.substr(9));
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("scene primitive: expected key=value, got '" + tok + "'");
      const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      if (k == "kind") {
        if (v == "sphere") p.kind = Primitive::Kind::sphere;
        else if (v == "box") p.kind = Primitive::Kind::box;
        else if (v == "shell") p.kind = Primitive::Kind::shell;
        else throw std::invalid_argument("scene primitive: unknown kind '" + v + "'");
      } else if (k == "center") p.center = parse_vec3(k, v);
      else if (k == "radius") p.radius = parse_double(k, v);
      else if (k == "thickness") p.thickness = parse_double(k, v);
      else if (k == "half_extent") p.half_extent = parse_vec3(k, v);
      else if (k == "density") p.density = parse_double(k, v);
      else if (k == "color") p.color = parse_vec3(k, v);
      else if (k == "color2") p.color2 = parse_vec3(k, v);
      else if (k == "pattern_frequency") p.pattern_frequency = parse_double(k, v);
      else throw std::invalid_argument("scene primitive: unknown key '" + k + "'");
    }
    if (!(p.density >= 0.0)) throw std::invalid_argument("scene primitive: negative density");
    prims.push_back(p);
  }
  for (const auto& [k, v] : parse_key_values(header)) {
    if (k == "name") s.name = v;
    else if (k == "background") s.background = parse_vec3(k, v);
    else if (k == "near") s.near = parse_double(k, v);
    else if (k == "far") s.far = parse_double(k, v);
    else if (k == "unbounded") s.unbounded = parse_bool(k, v);
    else if (k == "rig") {
      if (v == "circle") s.rig = CameraRig::circle;
      else if (v == "arc") s.rig = CameraRig::arc;
      else throw std::invalid_argument("scene: unknown rig '" + v + "'");
    } else if (k == "camera_count") s.camera_count = static_cast<int>(parse_uint(k, v));
    else if (k == "rig_radius") s.rig_radius = parse_double(k, v);
    else if (k == "rig_height") s.rig_height = parse_double(k, v);
    else if (k == "arc_span") s.arc_span = parse_double(k, v);
    else if (k == "fov_y") s.fov_y = parse_double(k, v);
    else throw std::invalid_argument("scene: unknown key '" + k + "'");
  }
  if (s.name.empty()) throw std::invalid_argument("scene: missing name");
  if (!(s.near < s.far)) throw std::invalid_argument("scene: near must be below far");
  if (s.camera_count < 1) throw std::invalid_argument("scene: needs at least one camera");
  s.field = AnalyticField(std::move(prims));
  return s;
}

// ---------------------------------------------------------------------------
// Ground truth

RayGroundTruth ground_truth_ray(const AnalyticField& field, const Ray& ray, const Rgb& background, std::size_t n_quad) {
  const auto iv = RayIntervalSet::uniform(ray.near, ray.far, n_quad);
  DensitySamples s{iv, std::vector<double>(n_quad), std::vector<Rgb>(n_quad)};
  for (std::size_t i = 0; i < n_quad; ++i) {
    const auto [d, c] = field.sample(ray.at(iv.midpoint(i)));
    s.densities[i] = d;
    s.colors[i] = c;
  }
  const CompositeResult r = composite(s, background);
  const DiscreteDepthPdf pdf = normalize_to_pdf(r.weights, iv);
  return {r.pixel_color, pdf.degenerate ? ray.far : expected_depth_discrete(pdf)};
}

GroundTruth render_ground_truth(const SceneSpec& scene, const CameraModel& cam, std::size_t n_quad) {
  cam.validate();
  GroundTruth gt{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 1)};
  parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < cam.width; ++x) {
      const auto r = ground_truth_ray(scene.field, generate_ray(cam, x, y), scene.background, n_quad);
      for (int c = 0; c < 3; ++c) gt.rgb.at(x, y, c) = r.color[c];
      gt.depth.at(x, y, 0) = r.depth;
    }
  });
  return gt;
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

Image quantize16(const Image& img, double scale) {
  Image q = img;
  for (double& v : q.data) v = std::round(std::clamp(v / scale, 0.0, 1.0) * 65535.0) / 65535.0 * scale;
  return q;
}

std::string indexed(const char* pattern, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, static_cast<int>(i));
  return buf;
}

std::string join_indices(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> split_indices(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(parse_uint(key, part));
  }
  return out;
}

std::string read_text(const std::filesystem::path& p) {
  const auto bytes = read_file_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  write_file_atomic(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace

SyntheticDataset generate_dataset(const SceneSpec& scene, int width, int height, std::size_t n_quad) {
  SyntheticDataset ds;
  ds.scene = scene;
  ds.cameras = make_cameras(scene, width, height);
  ds.depth_scale = scene.far;
  ds.n_quad = n_quad;
  for (std::size_t i = 0; i < ds.cameras.size(); ++i) {
    const auto gt = render_ground_truth(scene, ds.cameras[i], n_quad);
    ds.images.push_back(quantize8(gt.rgb));
    ds.depths.push_back(quantize16(gt.depth, ds.depth_scale));
    (i % 10 == 5 ? ds.validation : ds.train).push_back(i);
  }
  return ds;
}

std::string format_camera(const CameraModel& c) {
  return "position = " + format_vec3(c.position) + "\nlook_at = " + format_vec3(c.look_at) + "\nup = " +
         format_vec3(c.up) + "\nfov_y = " + format_double(c.fov_y) + "\nwidth = " + std::to_string(c.width) +
         "\nheight = " + std::to_string(c.height) + "\nnear = " + format_double(c.near) +
         "\nfar = " + format_double(c.far) + "\n";
}

CameraModel parse_camera(const std::string& text) {
  CameraModel c;
  for (const auto& [k, v] : parse_key_values(text)) {
    if (k == "position") c.position = parse_vec3(k, v);
    else if (k == "look_at") c.look_at = parse_vec3(k, v);
    else if (k == "up") c.up = parse_vec3(k, v);
    else if (k == "fov_y") c.fov_y = parse_double(k, v);
    else if (k == "width") c.width = static_cast<int>(parse_uint(k, v));
    else if (k == "height") c.height = static_cast<int>(parse_uint(k, v));
    else if (k == "near") c.near = parse_double(k, v);
    else if (k == "far") c.far = parse_double(k, v);
    else throw std::invalid_argument("camera: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "cameras");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "depth");
  for (std::size_t i = 0; i < ds.cameras.size(); ++i) {
    write_text(dir / "cameras" / indexed("cam_%03d.txt", i), format_camera(ds.cameras[i]));
    write_ppm(dir / "images" / indexed("img_%03d.ppm", i), ds.images[i]);
    write_pgm16(dir / "depth" / indexed("dep_%03d.pgm", i), ds.depths[i], ds.depth_scale);
  }
  write_text(dir / "scene.txt", format_scene(ds.scene));
  std::string m;
  m += "scene = " + ds.scene.name + "\n";
  m += "count = " + std::to_string(ds.cameras.size()) + "\n";
  m += "width = " + std::to_string(ds.cameras.empty() ? 0 : ds.cameras[0].width) + "\n";
  m += "height = " + std::to_string(ds.cameras.empty() ? 0 : ds.cameras[0].height) + "\n";
  m += "near = " + format_double(ds.scene.near) + "\n";
  m += "far = " + format_double(ds.scene.far) + "\n";
  m += "unbounded = " + format_bool(ds.scene.unbounded) + "\n";
  m += "background = " + format_vec3(ds.scene.background) + "\n";
  m += "depth_scale = " + format_double(ds.depth_scale) + "\n";
  m += "n_quad = " + std::to_string(ds.n_quad) + "\n";
  m += "train = " + join_indices(ds.train) + "\n";
  m += "validation = " + join_indices(ds.validation) + "\n";
  // Written last so a complete manifest marks a complete dataset.
  write_text(dir / "manifest.txt", m);
}

SyntheticDataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.txt"))
    throw std::runtime_error(dir.string() + ": no manifest.txt (not a dataset directory)");
  const auto m = parse_key_values(read_text(dir / "manifest.txt"));
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = m.find(k);
    if (it == m.end()) throw std::runtime_error("manifest.txt: missing key '" + k + "'");
    return it->second;
  };
  SyntheticDataset ds;
  ds.scene = parse_scene(read_text(dir / "scene.txt"));
  ds.depth_scale = parse_double("depth_scale", get("depth_scale"));
  ds.n_quad = parse_uint("n_quad", get("n_quad"));
  ds.train = split_indices("train", get("train"));
  ds.validation = split_indices("validation", get("validation"));
  const std::size_t count = parse_uint("count", get("count"));
  for (std::size_t i = 0; i < count; ++i) {
    ds.cameras.push_back(parse_camera(read_text(dir / "cameras" / indexed("cam_%03d.txt", i))));
    ds.images.push_back(read_ppm(dir / "images" / indexed("img_%03d.ppm", i)));
    ds.depths.push_back(read_pgm16(dir / "depth" / indexed("dep_%03d.pgm", i), ds.depth_scale));
    const auto& c = ds.cameras.back();
    if (ds.images.back().width != c.width || ds.images.back().height != c.height ||
        ds.depths.back().width != c.width || ds.depths.back().height != c.height)
      throw std::runtime_error(dir.string() + ": image " + std::to_string(i) + " does not match its camera resolution");
  }
  for (auto i : ds.train)
    if (i >= count) throw std::runtime_error("manifest.txt: train index out of range");
  for (auto i : ds.validation)
    if (i >= count) throw std::runtime_error("manifest.txt: validation index out of range");
  return ds;
}

}  // namespace ddnerf

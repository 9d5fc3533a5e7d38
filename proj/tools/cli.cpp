#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ddnerf/experiment.hpp"
#include "ddnerf/image.hpp"
#include "ddnerf/keyvalue.hpp"
#include "ddnerf/scene.hpp"
#include "ddnerf/serialize.hpp"
#include "ddnerf/trainer.hpp"

namespace ddnerf::cli {

namespace fs = std::filesystem;

namespace {

// Raised for bad input that the parser cannot see (unknown scene, bad config
// file); maps to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& p) {
  const auto b = read_file_bytes(p);
  return std::string(b.begin(), b.end());
}

void write_text(const fs::path& p, const std::string& s) {
  write_file_atomic(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

SceneSpec resolve_scene(const std::string& name) {
  if (auto s = find_standard_scene(name)) return *s;
  if (fs::is_regular_file(name)) return parse_scene(read_text(name));
  throw UsageError("unknown scene '" + name + "'; available scenes: " + join(standard_scene_names()) +
                   " (or a path to a scene file)");
}

SyntheticDataset load_data(const std::string& dir) {
  if (!fs::is_regular_file(fs::path(dir) / "manifest.txt"))
    throw UsageError("'" + dir + "' is not a dataset directory (no manifest.txt); create one with `gen`");
  return read_dataset(dir);
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::is_regular_file(path)) throw UsageError("config file '" + path + "' not found");
  try {
    return parse_key_values(read_text(path));
  } catch (const std::invalid_argument& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// Flags shared by train and compare; unset flags leave the config untouched.
struct TrainFlags {
  std::string config;
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> iters;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<double> lambda_de;
  std::optional<std::size_t> batch;
  bool unbounded = false;
  std::vector<std::string> sets;

  void add_to(CLI::App& app, bool with_variant) {
    app.add_option("--config", config, "key = value file (flags override its keys)");
    app.add_option("--samples", samples, "coarse and fine samples per ray")->check(CLI::PositiveNumber);
    app.add_option("--iters", iters, "training iterations")->check(CLI::PositiveNumber);
    app.add_option("--lambda-de", lambda_de, "weight of the distribution-estimation loss")->check(CLI::NonNegativeNumber);
    app.add_option("--batch", batch, "rays per iteration")->check(CLI::PositiveNumber);
    app.add_flag("--unbounded", unbounded, "sphere-plus-log partitioning of the coarse pass");
    app.add_option("--set", sets, "extra config override key=value (repeatable)");
    if (with_variant) {
      app.add_option("--seed", seed, "random seed");
      app.add_option("--variant", variant, "dd or baseline")->check(CLI::IsMember({"dd", "baseline"}));
    }
  }

  std::map<std::string, std::string> overrides() const {
    std::map<std::string, std::string> o;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      o[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    if (samples) o["n_coarse"] = o["n_fine"] = std::to_string(*samples);
    if (iters) o["iterations"] = std::to_string(*iters);
    if (seed) o["seed"] = std::to_string(*seed);
    if (variant) o["variant"] = *variant;
    if (lambda_de) o["lambda_de"] = format_double(*lambda_de);
    if (batch) o["batch"] = std::to_string(*batch);
    if (unbounded) o["unbounded"] = "true";
    return o;
  }
};

TrainConfig resolve(const SyntheticDataset& ds, const TrainFlags& f) {
  try {
    return resolve_train_config(ds, load_config_file(f.config), f.overrides());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

int cmd_gen(const std::string& scene_name, const std::string& out_dir, int width, int height, std::size_t n_quad,
            bool unbounded, std::ostream& out) {
  SceneSpec scene = resolve_scene(scene_name);
  if (unbounded) scene.unbounded = true;
  const auto ds = generate_dataset(scene, width, height, n_quad);
  write_dataset(out_dir, ds);
  out << "wrote " << ds.images.size() << " images of scene '" << scene.name << "' to " << out_dir << " ("
      << ds.train.size() << " train, " << ds.validation.size() << " validation)\n";
  return kExitOk;
}

int cmd_train(const std::string& data, const std::string& out_dir, const TrainFlags& flags, bool resume,
              std::uint64_t checkpoint_every, bool quiet, std::ostream& out) {
  const auto ds = load_data(data);
  const TrainConfig cfg = resolve(ds, flags);
  DirectoryLock lock(out_dir);
  TrainRunOptions opts;
  opts.resume = resume;
  opts.checkpoint_every = checkpoint_every;
  const std::uint64_t every = std::max<std::uint64_t>(1, cfg.iterations / 10);
  if (!quiet)
    opts.on_step = [&](std::uint64_t step, const LossReport& r) {
      if ((step + 1) % every == 0 || step + 1 == cfg.iterations)
        out << "step " << step + 1 << "/" << cfg.iterations << " loss " << r.total << " fine " << r.photometric_fine
            << std::endl;
    };
  try {
    train_run(ds, cfg, out_dir, opts);
  } catch (const NumericalError& e) {
    throw std::runtime_error(std::string(e.what()) + "; last good state saved to " +
                             (fs::path(out_dir) / "checkpoint.ddnf").string());
  }
  out << "final checkpoint: " << (fs::path(out_dir) / "final.ddnf").string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out_path, std::ostream& out) {
  const auto ds = load_data(data);
  const auto state = load_checkpoint(checkpoint);
  const auto& s = state.config.sampling;
  if (std::abs(s.near - ds.scene.near) > 1e-12 || std::abs(s.far - ds.scene.far) > 1e-12)
    throw std::runtime_error("checkpoint near/far (" + format_double(s.near) + ", " + format_double(s.far) +
                             ") does not match the dataset (" + format_double(ds.scene.near) + ", " +
                             format_double(ds.scene.far) + ")");
  const std::string csv = eval_csv(evaluate(state, ds));
  if (out_path.empty()) {
    out << csv;
  } else {
    const fs::path p(out_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text(p, csv);
    out << "wrote " << out_path << "\n";
  }
  return kExitOk;
}

int cmd_render(const std::string& checkpoint, const std::string& data, const std::string& out_dir,
               std::optional<int> camera, std::ostream& out) {
  const auto ds = load_data(data);
  const auto state = load_checkpoint(checkpoint);
  std::vector<std::size_t> which;
  if (camera) {
    if (*camera < 0 || static_cast<std::size_t>(*camera) >= ds.cameras.size())
      throw UsageError("--camera must be in [0, " + std::to_string(ds.cameras.size()) + ")");
    which.push_back(static_cast<std::size_t>(*camera));
  } else {
    which = ds.validation;
  }
  fs::create_directories(out_dir);
  for (std::size_t i : which) {
    const auto r = render_image(state, ds.cameras[i]);
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%03d", static_cast<int>(i));
    const fs::path dir(out_dir);
    write_ppm(dir / ("rgb" + std::string(suffix) + ".ppm"), r.rgb);
    write_ppm(dir / ("rgb_coarse" + std::string(suffix) + ".ppm"), r.rgb_coarse);
    write_pgm16(dir / ("depth" + std::string(suffix) + ".pgm"), r.depth, ds.depth_scale);
    write_pgm16(dir / ("depth_coarse" + std::string(suffix) + ".pgm"), r.depth_coarse, ds.depth_scale);
    write_pgm16(dir / ("disparity" + std::string(suffix) + ".pgm"), r.disparity, 1.0);
  }
  out << "rendered " << which.size() << " view(s) to " << out_dir << "\n";
  return kExitOk;
}

std::vector<std::uint64_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::uint64_t> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      v.push_back(parse_uint(key, trim(part)));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (v.empty()) throw UsageError(key + ": expected a comma-separated list");
  return v;
}

int cmd_compare(const std::string& data, const std::string& out_dir, const TrainFlags& flags,
                const std::string& budgets, const std::string& seeds, bool no_reuse, std::ostream& out) {
  const auto ds = load_data(data);
  CompareOptions opts;
  opts.budgets.clear();
  for (auto b : parse_list("--budgets", budgets)) {
    if (b == 0) throw UsageError("--budgets: budgets must be positive");
    opts.budgets.push_back(static_cast<std::size_t>(b));
  }
  opts.seeds = parse_list("--seeds", seeds);
  opts.reuse = !no_reuse;
  opts.on_run = [&](const std::string& name) { out << "training " << name << std::endl; };
  std::map<std::string, std::string> file_values;
  std::map<std::string, std::string> overrides;
  try {
    file_values = load_config_file(flags.config);
    overrides = flags.overrides();
    // Fail on a bad configuration before any run starts.
    (void)resolve_train_config(ds, file_values, overrides);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  DirectoryLock lock(out_dir);
  const auto result = compare(ds, file_values, overrides, out_dir, opts);
  out << compare_csv(result);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Depth-distribution radiance fields on synthetic scenes"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  std::string scene, out_dir, data, checkpoint, budgets = "4,8,16", seeds = "0,1,2";
  int width = 64, height = 64;
  std::size_t n_quad = 1024;
  bool unbounded_scene = false, resume = false, quiet = false, no_reuse = false;
  std::uint64_t checkpoint_every = 1000;
  std::optional<int> camera;
  TrainFlags train_flags, compare_flags;

  auto* gen = app.add_subcommand("gen", "render a synthetic dataset with the quadrature oracle");
  gen->add_option("--scene", scene, "standard scene name or scene file")->required();
  gen->add_option("--out", out_dir, "dataset directory")->required();
  gen->add_option("--width", width, "image width")->check(CLI::PositiveNumber);
  gen->add_option("--height", height, "image height")->check(CLI::PositiveNumber);
  gen->add_option("--n-quad", n_quad, "ground-truth samples per ray")->check(CLI::PositiveNumber);
  gen->add_flag("--unbounded", unbounded_scene, "mark the scene for unbounded partitioning");

  auto* train = app.add_subcommand("train", "train coarse and fine models on a dataset");
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--out", out_dir, "run directory")->required();
  train_flags.add_to(*train, true);
  train->add_flag("--resume", resume, "continue from <out>/checkpoint.ddnf");
  train->add_option("--checkpoint-every", checkpoint_every, "checkpoint interval in steps (0: final only)");
  train->add_flag("--quiet", quiet, "no progress lines");

  auto* eval = app.add_subcommand("eval", "PSNR, SSIM and depth error on the validation images");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--out", out_dir, "metrics CSV path (default: stdout)");

  auto* render = app.add_subcommand("render", "render RGB, depth and disparity images");
  render->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  render->add_option("--data", data, "dataset directory (cameras)")->required();
  render->add_option("--out", out_dir, "output directory")->required();
  render->add_option("--camera", camera, "camera index (default: every validation camera)");

  auto* cmp = app.add_subcommand("compare", "train both variants over sample budgets and seeds");
  cmp->add_option("--data", data, "dataset directory")->required();
  cmp->add_option("--out", out_dir, "comparison directory")->required();
  compare_flags.add_to(*cmp, false);
  cmp->add_option("--budgets", budgets, "comma-separated sample budgets");
  cmp->add_option("--seeds", seeds, "comma-separated seeds");
  cmp->add_flag("--no-reuse", no_reuse, "retrain runs that already have metrics");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(scene, out_dir, width, height, n_quad, unbounded_scene, out);
    if (*train) return cmd_train(data, out_dir, train_flags, resume, checkpoint_every, quiet, out);
    if (*eval) return cmd_eval(checkpoint, data, out_dir, out);
    if (*render) return cmd_render(checkpoint, data, out_dir, camera, out);
    if (*cmp) return cmd_compare(data, out_dir, compare_flags, budgets, seeds, no_reuse, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace ddnerf::cli

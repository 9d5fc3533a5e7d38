#include "ddnerf/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ddnerf/keyvalue.hpp"
#include "ddnerf/serialize.hpp"

namespace ddnerf {

namespace fs = std::filesystem;

TrainConfig toy_defaults() {
  TrainConfig c;
  c.sampling.n_coarse = 8;
  c.sampling.n_fine = 8;
  c.network.hidden_layers = 3;
  c.network.hidden_width = 32;
  c.network.encoding.num_frequencies = 6;
  c.batch_rays = 64;
  c.iterations = 10000;
  c.lr_start = 5e-3;
  c.lr_end = 5e-4;
  return c;
}

TrainConfig resolve_train_config(const SyntheticDataset& ds, const std::map<std::string, std::string>& file_values,
                                 const std::map<std::string, std::string>& overrides) {
  TrainConfig c = toy_defaults();
  c.sampling.near = ds.scene.near;
  c.sampling.far = ds.scene.far;
  c.sampling.unbounded = ds.scene.unbounded;
  c.sampling.background = ds.scene.background;
  if (!ds.cameras.empty()) {
    c.image_width = ds.cameras.front().width;
    c.image_height = ds.cameras.front().height;
  }
  std::map<std::string, std::string> merged = file_values;
  for (const auto& [k, v] : overrides) merged[k] = v;
  apply_config_values(c, merged);
  const LossConfig reg = LossConfig::defaults_for(c.sampling.n_coarse);
  if (!merged.count("lambda_mu")) c.loss.lambda_mu = reg.lambda_mu;
  if (!merged.count("lambda_sigma")) c.loss.lambda_sigma = reg.lambda_sigma;
  if (c.variant == Variant::baseline) c.loss.lambda_de = 0.0;
  c.validate();
  return c;
}

TrainingPool build_training_pool(const SyntheticDataset& ds) {
  TrainingPool pool;
  for (std::size_t i : ds.train) {
    const auto& cam = ds.cameras[i];
    const auto rays = camera_rays(cam);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        pool.rays.push_back(rays[static_cast<std::size_t>(y) * cam.width + x]);
        const Image& img = ds.images[i];
        pool.colors.emplace_back(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      }
  }
  return pool;
}

namespace {

void write_text(const fs::path& p, const std::string& s) {
  write_file_atomic(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

std::string read_text(const fs::path& p) {
  const auto b = read_file_bytes(p);
  return std::string(b.begin(), b.end());
}

// Keeps the header and the rows of steps before `step`.
std::string truncate_log(const std::string& text, std::uint64_t step) {
  std::stringstream ss(text);
  std::string line, out;
  bool header = true;
  while (std::getline(ss, line)) {
    if (header) {
      out += line + "\n";
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoull(line.substr(0, line.find(','))) < step) out += line + "\n";
  }
  return out;
}

}  // namespace

TrainState train_run(const SyntheticDataset& ds, const TrainConfig& cfg, const fs::path& out_dir,
                     const TrainRunOptions& opts) {
  fs::create_directories(out_dir);
  const fs::path ckpt = out_dir / "checkpoint.ddnf";
  const fs::path log_path = out_dir / "train_log.csv";
  TrainState state = make_train_state(cfg);
  std::string log_text = loss_csv_header() + "\n";
  if (opts.resume && fs::exists(ckpt)) {
    state = load_checkpoint(ckpt);
    if (format_config(state.config) != format_config(cfg))
      throw std::runtime_error(ckpt.string() + ": checkpoint was written with a different configuration");
    if (fs::exists(log_path)) log_text = truncate_log(read_text(log_path), state.step);
  }
  write_text(out_dir / "config.txt", format_config(cfg));
  write_text(log_path, log_text);

  const TrainingPool pool = build_training_pool(ds);
  std::ofstream log(log_path, std::ios::app);
  std::vector<Ray> rays(cfg.batch_rays);
  std::vector<Rgb> colors(cfg.batch_rays);
  const std::uint64_t end = opts.stop_at ? std::min(*opts.stop_at, cfg.iterations) : cfg.iterations;
  while (state.step < end) {
    const auto idx = sample_batch(state, pool.rays.size());
    for (std::size_t b = 0; b < idx.size(); ++b) {
      rays[b] = pool.rays[idx[b]];
      colors[b] = pool.colors[idx[b]];
    }
    const std::uint64_t step = state.step;
    LossReport rep;
    try {
      rep = train_step(state, rays, colors);
    } catch (const NumericalError&) {
      log.flush();
      save_checkpoint(ckpt, state);
      throw;
    }
    log << loss_csv_row(step, rep) << '\n';
    if (opts.on_step) opts.on_step(step, rep);
    if (opts.checkpoint_every > 0 && state.step % opts.checkpoint_every == 0) {
      log.flush();
      save_checkpoint(ckpt, state);
    }
  }
  log.flush();
  save_checkpoint(ckpt, state);
  if (state.step == cfg.iterations) save_checkpoint(out_dir / "final.ddnf", state);
  return state;
}

Image disparity_map(const Image& depth) {
  Image d = depth;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double& v : d.data) {
    v = v > 0.0 ? 1.0 / v : 0.0;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double& v : d.data) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return d;
}

RenderedImage render_image(const TrainState& state, const CameraModel& cam) {
  if (cam.width < 1 || cam.height < 1) throw std::invalid_argument("render_image: zero resolution");
  const auto rays = camera_rays(cam);
  const auto& cfg = state.config;
  const auto r =
      render_rays(rays, field_fn(state.coarse), field_fn(state.fine), cfg.sampling, cfg.pass_options(state.step, false));
  RenderedImage out{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 1),
                    Image(cam.width, cam.height, 1), Image(cam.width, cam.height, 1), Image()};
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const auto& p = r[static_cast<std::size_t>(y) * cam.width + x];
      for (int c = 0; c < 3; ++c) {
        out.rgb.at(x, y, c) = p.fine_color[c];
        out.rgb_coarse.at(x, y, c) = p.coarse_color[c];
      }
      out.depth.at(x, y, 0) = p.depth_fine;
      out.depth_coarse.at(x, y, 0) = p.depth_coarse_mixture;
      out.depth_coarse_hist.at(x, y, 0) = p.depth_coarse_discrete;
    }
  out.disparity = disparity_map(out.depth);
  return out;
}

double depth_mae(const Image& estimate, const Image& truth, double sentinel) {
  if (estimate.data.size() != truth.data.size()) throw std::invalid_argument("depth_mae: size mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    if (!(truth.data[i] < sentinel * (1.0 - 1e-9))) continue;
    sum += std::abs(estimate.data[i] - truth.data[i]);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::vector<EvalRow> evaluate(const TrainState& state, const SyntheticDataset& ds) {
  const auto& cfg = state.config;
  std::vector<EvalRow> rows;
  EvalRow mean;
  mean.image = "mean";
  for (std::size_t i : ds.validation) {
    const auto& cam = ds.cameras[i];
    if ((cfg.image_width && cfg.image_width != cam.width) || (cfg.image_height && cfg.image_height != cam.height))
      throw std::invalid_argument("dataset resolution " + std::to_string(cam.width) + "x" + std::to_string(cam.height) +
                                  " does not match the checkpoint's training resolution " +
                                  std::to_string(cfg.image_width) + "x" + std::to_string(cfg.image_height));
    const auto r = render_image(state, cam);
    char name[32];
    std::snprintf(name, sizeof name, "img_%03d", static_cast<int>(i));
    EvalRow row;
    row.image = name;
    row.psnr = psnr(r.rgb, ds.images[i]);
    row.ssim = ssim(r.rgb, ds.images[i]);
    row.depth_mae_coarse = depth_mae(r.depth_coarse, ds.depths[i], ds.depth_scale);
    row.depth_mae_coarse_hist = depth_mae(r.depth_coarse_hist, ds.depths[i], ds.depth_scale);
    row.depth_mae_fine = depth_mae(r.depth, ds.depths[i], ds.depth_scale);
    mean.psnr += row.psnr;
    mean.ssim += row.ssim;
    mean.depth_mae_coarse += row.depth_mae_coarse;
    mean.depth_mae_coarse_hist += row.depth_mae_coarse_hist;
    mean.depth_mae_fine += row.depth_mae_fine;
    rows.push_back(row);
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    mean.psnr /= n;
    mean.ssim /= n;
    mean.depth_mae_coarse /= n;
    mean.depth_mae_coarse_hist /= n;
    mean.depth_mae_fine /= n;
  }
  rows.push_back(mean);
  return rows;
}

std::string eval_csv_header() { return "image,psnr,ssim,depth_mae_coarse,depth_mae_coarse_hist,depth_mae_fine"; }

namespace {

std::string eval_fields(const EvalRow& r) {
  return format_double(r.psnr) + "," + format_double(r.ssim) + "," + format_double(r.depth_mae_coarse) + "," +
         format_double(r.depth_mae_coarse_hist) + "," + format_double(r.depth_mae_fine);
}

std::optional<EvalRow> read_mean_row(const fs::path& csv) {
  std::stringstream ss(read_text(csv));
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("mean,", 0) != 0) continue;
    std::stringstream ls(line);
    std::string f[6];
    for (auto& x : f) std::getline(ls, x, ',');
    EvalRow r;
    r.image = "mean";
    r.psnr = parse_double("psnr", f[1]);
    r.ssim = parse_double("ssim", f[2]);
    r.depth_mae_coarse = parse_double("depth_mae_coarse", f[3]);
    r.depth_mae_coarse_hist = parse_double("depth_mae_coarse_hist", f[4]);
    r.depth_mae_fine = parse_double("depth_mae_fine", f[5]);
    return r;
  }
  return std::nullopt;
}

}  // namespace

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::string out = eval_csv_header() + "\n";
  for (const auto& r : rows) out += r.image + "," + eval_fields(r) + "\n";
  return out;
}

CompareResult compare(const SyntheticDataset& ds, const std::map<std::string, std::string>& file_values,
                      const std::map<std::string, std::string>& overrides, const fs::path& out_dir,
                      const CompareOptions& opts) {
  if (opts.budgets.empty() || opts.seeds.empty()) throw std::invalid_argument("compare needs budgets and seeds");
  fs::create_directories(out_dir);
  CompareResult result;
  for (std::size_t budget : opts.budgets) {
    for (Variant v : {Variant::baseline, Variant::dd}) {
      CompareSummary sum;
      sum.budget = budget;
      sum.variant = v;
      sum.mean.image = "mean";
      for (std::uint64_t seed : opts.seeds) {
        auto ov = overrides;
        ov["n_coarse"] = std::to_string(budget);
        ov["n_fine"] = std::to_string(budget);
        ov["seed"] = std::to_string(seed);
        ov["variant"] = variant_name(v);
        const TrainConfig cfg = resolve_train_config(ds, file_values, ov);
        const fs::path run_dir =
            out_dir / ("b" + std::to_string(budget) + "_" + variant_name(v) + "_s" + std::to_string(seed));
        const fs::path metrics = run_dir / "metrics.csv";
        std::optional<EvalRow> mean;
        if (opts.reuse && fs::exists(metrics) && fs::exists(run_dir / "config.txt") &&
            read_text(run_dir / "config.txt") == format_config(cfg))
          mean = read_mean_row(metrics);
        if (!mean) {
          if (opts.on_run) opts.on_run(run_dir.filename().string());
          TrainRunOptions tro;
          tro.resume = opts.reuse;
          const TrainState st = train_run(ds, cfg, run_dir, tro);
          const auto rows = evaluate(st, ds);
          write_text(metrics, eval_csv(rows));
          mean = rows.back();
        }
        result.runs.push_back({budget, v, seed, *mean});
        sum.mean.psnr += mean->psnr;
        sum.mean.ssim += mean->ssim;
        sum.mean.depth_mae_coarse += mean->depth_mae_coarse;
        sum.mean.depth_mae_coarse_hist += mean->depth_mae_coarse_hist;
        sum.mean.depth_mae_fine += mean->depth_mae_fine;
      }
      const double n = static_cast<double>(opts.seeds.size());
      sum.mean.psnr /= n;
      sum.mean.ssim /= n;
      sum.mean.depth_mae_coarse /= n;
      sum.mean.depth_mae_coarse_hist /= n;
      sum.mean.depth_mae_fine /= n;
      result.summary.push_back(sum);
    }
  }
  write_text(out_dir / "compare.csv", compare_csv(result));
  write_text(out_dir / "runs.csv", runs_csv(result));
  return result;
}

std::string compare_csv(const CompareResult& r) {
  std::string out =
      "budget,variant,runs,psnr,ssim,depth_mae_coarse,depth_mae_coarse_hist,depth_mae_fine,"
      "delta_psnr,delta_ssim,delta_depth_mae_coarse,delta_depth_mae_fine\n";
  for (const auto& s : r.summary) {
    const CompareSummary* dd = nullptr;
    const CompareSummary* base = nullptr;
    for (const auto& o : r.summary) {
      if (o.budget != s.budget) continue;
      (o.variant == Variant::dd ? dd : base) = &o;
    }
    std::size_t runs = 0;
    for (const auto& run : r.runs) runs += run.budget == s.budget && run.variant == s.variant;
    std::string delta = ",,,";
    if (dd && base)
      delta = format_double(dd->mean.psnr - base->mean.psnr) + "," + format_double(dd->mean.ssim - base->mean.ssim) +
              "," + format_double(dd->mean.depth_mae_coarse - base->mean.depth_mae_coarse) + "," +
              format_double(dd->mean.depth_mae_fine - base->mean.depth_mae_fine);
    out += std::to_string(s.budget) + "," + variant_name(s.variant) + "," + std::to_string(runs) + "," +
           eval_fields(s.mean) + "," + delta + "\n";
  }
  return out;
}

std::string runs_csv(const CompareResult& r) {
  std::string out = "budget,variant,seed,psnr,ssim,depth_mae_coarse,depth_mae_coarse_hist,depth_mae_fine\n";
  for (const auto& run : r.runs)
    out += std::to_string(run.budget) + "," + variant_name(run.variant) + "," + std::to_string(run.seed) + "," +
           eval_fields(run.mean) + "\n";
  return out;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw std::runtime_error(dir.string() + " is in use by another process (remove " + path_.string() +
                             " if that process is gone)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace ddnerf

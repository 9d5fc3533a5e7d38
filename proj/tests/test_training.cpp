#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ddnerf/experiment.hpp"
#include "ddnerf/trainer.hpp"

using namespace ddnerf;
namespace fs = std::filesystem;

namespace {

const SyntheticDataset& small_wall() {
  static const SyntheticDataset ds = generate_dataset(*find_standard_scene("wall"), 16, 16, 256);
  return ds;
}

TrainConfig small_config(Variant v, std::uint64_t iterations = 50) {
  auto cfg = resolve_train_config(small_wall(), {}, {{"variant", variant_name(v)}, {"n_coarse", "4"}, {"n_fine", "4"}});
  cfg.iterations = iterations;
  cfg.batch_rays = 32;
  cfg.network.hidden_width = 16;
  cfg.network.hidden_layers = 2;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ddnerf_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("config precedence") {
  const auto& ds = small_wall();
  const auto def = resolve_train_config(ds, {}, {});
  CHECK(def.sampling.near == ds.scene.near);
  CHECK(def.sampling.far == ds.scene.far);
  CHECK(def.iterations == 10000);
  CHECK(def.image_width == 16);
  CHECK(def.loss.lambda_mu == doctest::Approx(0.1));

  const auto file = resolve_train_config(ds, {{"n_coarse", "16"}, {"iterations", "50"}}, {});
  CHECK(file.sampling.n_coarse == 16);
  CHECK(file.loss.lambda_mu == doctest::Approx(0.05));

  const auto flag = resolve_train_config(ds, {{"iterations", "50"}, {"lambda_mu", "0.07"}}, {{"iterations", "70"}});
  CHECK(flag.iterations == 70);
  CHECK(flag.loss.lambda_mu == 0.07);

  const auto base = resolve_train_config(ds, {}, {{"variant", "baseline"}, {"lambda_de", "0.3"}});
  CHECK(base.loss.lambda_de == 0.0);

  CHECK_THROWS_AS(resolve_train_config(ds, {{"bogus", "1"}}, {}), std::invalid_argument);
  CHECK_THROWS(resolve_train_config(ds, {}, {{"near", "7"}}));
  CHECK_THROWS(parse_variant("other"));
}

TEST_CASE("config text round trip") {
  auto cfg = small_config(Variant::dd);
  cfg.loss.kl_direction = KlDirection::estimate_first;
  cfg.sampling.background = Rgb(0.1, 1.0 / 3.0, 0.7);
  TrainConfig back;
  apply_config_values(back, parse_key_values(format_config(cfg)));
  CHECK(format_config(back) == format_config(cfg));
  CHECK(back.loss.kl_direction == KlDirection::estimate_first);
}

TEST_CASE("variants share the coarse initialization and sampling stream") {
  const auto dd = make_train_state(small_config(Variant::dd));
  const auto base = make_train_state(small_config(Variant::baseline));
  const std::size_t shared = dd.coarse.shared_parameter_count();
  CHECK(shared == base.coarse.parameter_count());
  for (std::size_t i = 0; i < shared; ++i) REQUIRE(dd.coarse.parameters()[i] == base.coarse.parameters()[i]);
  CHECK(dd.fine == base.fine);
  CHECK(dd.rng == base.rng);

  // Identical coarse partitions at step 0.
  auto a = dd, b = base;
  const auto pool = build_training_pool(small_wall());
  const auto ia = sample_batch(a, pool.rays.size()), ib = sample_batch(b, pool.rays.size());
  CHECK(ia == ib);
  std::vector<Ray> rays;
  for (auto i : ia) rays.push_back(pool.rays[i]);
  std::mt19937_64 ra = a.rng, rb = b.rng;
  const auto ca = run_coarse(rays, field_fn(a.coarse), a.config.sampling, a.config.pass_options(0, true), ra);
  const auto cb = run_coarse(rays, field_fn(b.coarse), b.config.sampling, b.config.pass_options(0, true), rb);
  for (std::size_t r = 0; r < rays.size(); ++r) CHECK(ca[r].samples.intervals == cb[r].samples.intervals);
}

TEST_CASE("forced-uniform dd with lambda_de = 0 follows the baseline exactly") {
  auto dd_cfg = small_config(Variant::dd);
  dd_cfg.loss.lambda_de = 0.0;
  dd_cfg.force_uniform_mixture = true;
  auto dd = make_train_state(dd_cfg);
  auto base = make_train_state(small_config(Variant::baseline));
  const auto pool = build_training_pool(small_wall());
  for (int step = 0; step < 20; ++step) {
    const auto ia = sample_batch(dd, pool.rays.size());
    const auto ib = sample_batch(base, pool.rays.size());
    REQUIRE(ia == ib);
    std::vector<Ray> rays;
    std::vector<Rgb> gt;
    for (auto i : ia) {
      rays.push_back(pool.rays[i]);
      gt.push_back(pool.colors[i]);
    }
    const auto ra = train_step(dd, rays, gt);
    const auto rb = train_step(base, rays, gt);
    REQUIRE(ra.photometric_coarse == rb.photometric_coarse);
    REQUIRE(ra.photometric_fine == rb.photometric_fine);
  }
  CHECK(dd.fine == base.fine);
}

TEST_CASE("non-finite loss aborts without touching the state") {
  auto st = make_train_state(small_config(Variant::dd));
  st.fine.parameters()[0] = std::numeric_limits<double>::quiet_NaN();
  const auto pool = build_training_pool(small_wall());
  const auto before = st;
  std::vector<Ray> rays(pool.rays.begin(), pool.rays.begin() + 8);
  std::vector<Rgb> gt(pool.colors.begin(), pool.colors.begin() + 8);
  CHECK_THROWS_AS(train_step(st, rays, gt), NumericalError);
  CHECK(st.step == before.step);
  CHECK(st.rng == before.rng);
  CHECK(st.coarse == before.coarse);
}

TEST_CASE("wall loss halves within 2000 steps") {
  auto cfg = resolve_train_config(small_wall(), {}, {{"iterations", "2000"}});
  std::vector<double> totals;
  const auto dir = fresh_dir("wall_loss");
  TrainRunOptions opts;
  opts.checkpoint_every = 0;
  opts.on_step = [&](std::uint64_t, const LossReport& r) { totals.push_back(r.total); };
  train_run(small_wall(), cfg, dir, opts);
  REQUIRE(totals.size() == 2000);
  double first = 0.0, last = 0.0;
  for (int k = 0; k < 50; ++k) {
    first += totals[k];
    last += totals[totals.size() - 1 - k];
  }
  CHECK(last < 0.5 * first);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip and bit-exact continuation") {
  const auto dir = fresh_dir("ckpt");
  fs::create_directories(dir);
  auto st = make_train_state(small_config(Variant::dd));
  const auto pool = build_training_pool(small_wall());
  auto step = [&](TrainState& s) {
    const auto idx = sample_batch(s, pool.rays.size());
    std::vector<Ray> rays;
    std::vector<Rgb> gt;
    for (auto i : idx) {
      rays.push_back(pool.rays[i]);
      gt.push_back(pool.colors[i]);
    }
    return train_step(s, rays, gt);
  };
  for (int k = 0; k < 5; ++k) step(st);
  save_checkpoint(dir / "a.ddnf", st);
  auto loaded = load_checkpoint(dir / "a.ddnf");
  CHECK(loaded == st);
  save_checkpoint(dir / "b.ddnf", loaded);
  CHECK(read_file_bytes(dir / "a.ddnf") == read_file_bytes(dir / "b.ddnf"));
  for (int k = 0; k < 5; ++k) CHECK(step(st) == step(loaded));
  CHECK(st == loaded);

  auto bytes = read_file_bytes(dir / "a.ddnf");
  bytes[0] = 'X';
  write_file_atomic(dir / "bad.ddnf", bytes);
  CHECK_THROWS(load_checkpoint(dir / "bad.ddnf"));
  fs::remove_all(dir);
}

TEST_CASE("interrupted run resumes bit-exactly") {
  const auto cfg = small_config(Variant::dd, 30);
  const auto full = fresh_dir("resume_full"), part = fresh_dir("resume_part");
  TrainRunOptions o;
  o.checkpoint_every = 7;
  train_run(small_wall(), cfg, full, o);
  o.stop_at = 16;  // the last periodic checkpoint is at step 14
  train_run(small_wall(), cfg, part, o);
  o.stop_at.reset();
  o.resume = true;
  train_run(small_wall(), cfg, part, o);
  CHECK(read_text(full / "train_log.csv") == read_text(part / "train_log.csv"));
  CHECK(read_file_bytes(full / "final.ddnf") == read_file_bytes(part / "final.ddnf"));
  CHECK(read_text(part / "config.txt") == format_config(cfg));

  auto other = cfg;
  other.lr_start *= 2.0;
  CHECK_THROWS(train_run(small_wall(), other, part, o));
  fs::remove_all(full);
  fs::remove_all(part);
}

TEST_CASE("render and evaluate") {
  const auto st = make_train_state(small_config(Variant::dd));
  CameraModel cam = small_wall().cameras[0];
  const auto img = render_image(st, cam);
  CHECK(img.rgb.width == 16);
  CHECK(img.depth.height == 16);
  CHECK(img.disparity.width == 16);
  for (double v : img.disparity.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  cam.width = 0;
  CHECK_THROWS(render_image(st, cam));

  const auto rows = evaluate(st, small_wall());
  CHECK(rows.size() == small_wall().validation.size() + 1);
  CHECK(rows.back().image == "mean");
  CHECK(rows.front().image == "img_005");
  const auto csv = eval_csv(rows);
  CHECK(csv.rfind(eval_csv_header() + "\n", 0) == 0);

  SyntheticDataset other = small_wall();
  other.cameras[5].width = 8;
  other.images[5] = Image(8, 16, 3);
  CHECK_THROWS_AS(evaluate(st, other), std::invalid_argument);

  CHECK(ssim(small_wall().images[5], small_wall().images[5]) == doctest::Approx(1.0));
}

TEST_CASE("depth mae skips sentinel pixels") {
  Image est(2, 1, 1), truth(2, 1, 1);
  est.data = {1.0, 3.0};
  truth.data = {1.5, 6.0};
  CHECK(depth_mae(est, truth, 6.0) == doctest::Approx(0.5));
  truth.data = {6.0, 6.0};
  CHECK(depth_mae(est, truth, 6.0) == 0.0);
}

TEST_CASE("compare produces matching runs and schema") {
  const auto dir = fresh_dir("compare");
  CompareOptions opts;
  opts.budgets = {4, 8};
  opts.seeds = {0};
  int trained = 0;
  opts.on_run = [&](const std::string&) { ++trained; };
  const std::map<std::string, std::string> ov{{"iterations", "20"}, {"batch", "16"}, {"width", "8"}, {"layers", "1"}};
  const auto r = compare(small_wall(), {}, ov, dir, opts);
  CHECK(trained == 4);
  CHECK(r.runs.size() == 4);
  CHECK(r.summary.size() == 4);
  const auto csv = read_text(dir / "compare.csv");
  CHECK(csv.find("depth_mae_coarse") != std::string::npos);
  CHECK(csv.find("depth_mae_fine") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(fs::exists(dir / "b4_dd_s0" / "metrics.csv"));
  CHECK(fs::exists(dir / "b8_baseline_s0" / "final.ddnf"));

  trained = 0;
  const auto again = compare(small_wall(), {}, ov, dir, opts);
  CHECK(trained == 0);
  CHECK(again.runs[3].mean.psnr == r.runs[3].mean.psnr);
  fs::remove_all(dir);
}

TEST_CASE("directory lock is exclusive") {
  const auto dir = fresh_dir("lock");
  fs::create_directories(dir);
  {
    DirectoryLock a(dir);
    CHECK_THROWS(DirectoryLock{dir});
  }
  CHECK_NOTHROW(DirectoryLock{dir});
  fs::remove_all(dir);
}

}  // TEST_SUITE

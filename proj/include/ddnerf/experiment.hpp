#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddnerf/image.hpp"
#include "ddnerf/scene.hpp"
#include "ddnerf/trainer.hpp"

namespace ddnerf {

/// Defaults used when neither a config file nor a flag sets a key: a small
/// network and batch that keep budget sweeps within desk-scale CPU time.
TrainConfig toy_defaults();

/// Precedence: toy defaults, then the dataset's scene bounds, then the config
/// file, then flag overrides. lambda_mu and lambda_sigma follow n_coarse
/// unless set explicitly; the baseline variant forces lambda_de = 0.
TrainConfig resolve_train_config(const SyntheticDataset& ds, const std::map<std::string, std::string>& file_values,
                                 const std::map<std::string, std::string>& overrides);

/// Every pixel ray of the training images with its ground-truth color.
struct TrainingPool {
  std::vector<Ray> rays;
  std::vector<Rgb> colors;
};
TrainingPool build_training_pool(const SyntheticDataset& ds);

struct TrainRunOptions {
  /// Checkpoint interval in steps (0 = only the final checkpoint).
  std::uint64_t checkpoint_every = 1000;
  /// Continue from out_dir/checkpoint.ddnf when it exists.
  bool resume = false;
  /// Stop after this many total steps (simulates an interruption).
  std::optional<std::uint64_t> stop_at;
  /// Progress callback per completed step.
  std::function<void(std::uint64_t, const LossReport&)> on_step;
};

/// Runs the training loop, writing config.txt, train_log.csv,
/// checkpoint.ddnf (periodic) and final.ddnf into out_dir. On a non-finite
/// loss the last good state is saved to checkpoint.ddnf and NumericalError
/// propagates.
TrainState train_run(const SyntheticDataset& ds, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                     const TrainRunOptions& opts = {});

struct RenderedImage {
  Image rgb;
  Image rgb_coarse;
  /// E[h^f]
  Image depth;
  /// E[f_dd] for the dd variant, E[h^c] for the baseline.
  Image depth_coarse;
  /// E[h^c]
  Image depth_coarse_hist;
  /// 1 / depth rescaled linearly to [0,1].
  Image disparity;
};

/// Evaluation-mode render (exact partitions, no smoothing, u = 1).
RenderedImage render_image(const TrainState& state, const CameraModel& cam);

/// Inverse depth mapped linearly onto [0,1] over the image.
Image disparity_map(const Image& depth);

struct EvalRow {
  std::string image;
  double psnr = 0.0;
  double ssim = 0.0;
  double depth_mae_coarse = 0.0;
  double depth_mae_coarse_hist = 0.0;
  double depth_mae_fine = 0.0;
};

/// Mean absolute depth error over pixels whose ground truth is not the far
/// sentinel; 0 when no pixel qualifies.
double depth_mae(const Image& estimate, const Image& truth, double sentinel);

/// One row per validation image followed by a "mean" row.
std::vector<EvalRow> evaluate(const TrainState& state, const SyntheticDataset& ds);
std::string eval_csv_header();
std::string eval_csv(const std::vector<EvalRow>& rows);

struct CompareOptions {
  std::vector<std::size_t> budgets{4, 8, 16};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  /// Reuse finished runs (a run directory with metrics.csv).
  bool reuse = true;
  std::function<void(const std::string&)> on_run;
};

struct CompareRun {
  std::size_t budget = 0;
  Variant variant = Variant::dd;
  std::uint64_t seed = 0;
  EvalRow mean;
};

struct CompareSummary {
  std::size_t budget = 0;
  Variant variant = Variant::dd;
  EvalRow mean;
};

struct CompareResult {
  std::vector<CompareRun> runs;
  std::vector<CompareSummary> summary;
};

/// Trains both variants at every budget and seed (run directories
/// b<budget>_<variant>_s<seed> under out_dir) and writes compare.csv and
/// runs.csv.
CompareResult compare(const SyntheticDataset& ds, const std::map<std::string, std::string>& file_values,
                      const std::map<std::string, std::string>& overrides, const std::filesystem::path& out_dir,
                      const CompareOptions& opts);
std::string compare_csv(const CompareResult& r);
std::string runs_csv(const CompareResult& r);

/// Exclusive lock on an output directory (lock file created with O_EXCL).
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace ddnerf

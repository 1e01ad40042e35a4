// include/xmodal/training.hpp

// Copyright 2026 The xmodal Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Training loops, model selection over folds, metrics and the experiment
// runners (component ablation, unlabeled-quantity sweep).
//
// One training step draws a labeled batch of size B and, in semi mode, an
// unlabeled batch of the same size. Labeled batching, unlabeled batching,
// the two derangement streams and model initialisation all use separate RNG
// substreams of the run seed, so a semi run with omega = 0 follows the
// fully-supervised trajectory bit for bit.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmodal/data.hpp"
#include "xmodal/objective.hpp"

namespace xmodal {

enum class TrainMode { kFully, kSemi };
std::string_view mode_name(TrainMode m);
TrainMode parse_mode(std::string_view s);

struct TrainConfig {
  TrainMode mode = TrainMode::kFully;
  ModalitySet modalities;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::size_t max_epochs = 40;
  std::size_t patience = 8;
  /// Restores the best-validation parameters before the final evaluation.
  bool restore_best = true;
  LossWeights weights;
  mmd::KernelConfig kernel;
  mmd::MatchingConfig matching;
  bool unpaired = true;
  std::uint64_t seed = 1;
  /// Unlabeled samples drawn from the pool in semi mode; 0 or the pool size
  /// uses all of it in stored order.
  std::size_t unlabeled_quota = 0;
  /// When positive, the pool is pseudo-labeled by a fully-supervised
  /// vanilla model and balanced to this many samples per class.
  std::size_t balance_cap = 0;
  int validation_fold = 0;
  DAEConfig dae = DAEConfig::toy();

  /// Throws ConfigError on an unusable combination.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Starts from `c`'s current values; unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const DAEConfig& c);
void from_json(const nlohmann::json& j, DAEConfig& c);

// ---------------------------------------------------------------------------
// Metrics

struct MetricsReport {
  std::vector<std::vector<std::size_t>> confusion;  // rows = true class
  std::vector<double> precision, recall, f1, support;
  double wap = 0, ua = 0, weighted_f1 = 0, accuracy = 0;
  /// Classes with no true samples; left out of UA.
  std::vector<std::size_t> absent;
};

/// All metrics from a confusion matrix. Precision of a never-predicted class
/// is 0. Classes absent from the truth are excluded from UA with a warning.
MetricsReport metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion);

/// Argmax rows (lowest index on ties).
std::vector<int> predict(const Tensor& probs);

MetricsReport score(std::span<const int> truth, std::span<const int> predicted, std::size_t classes);

/// Predicted class probabilities over a prepared set, in chunks of `chunk`.
Tensor predict_probs(const Model& model, const PreparedSet& set, std::size_t chunk = 256);
MetricsReport evaluate(const Model& model, const PreparedSet& set);

/// Mean L2 norm of the latents of every modality over a prepared set.
double mean_latent_norm(const Model& model, const PreparedSet& set);

nlohmann::json metrics_json(const MetricsReport& m);
nlohmann::json breakdown_json(const LossBreakdown& b);

// ---------------------------------------------------------------------------
// Runs

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown loss;     // mean over the epoch's steps
  MetricsReport validation;
};

struct RunRecord {
  std::string run_id;
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based index of the best validation UA
  std::optional<MetricsReport> test;
  std::size_t unlabeled_used = 0;
  double wall_seconds = 0;

  double best_validation_ua() const { return epochs.at(best_epoch - 1).validation.ua; }
};

/// Serialised appends of one JSON object per line. Records carry no
/// wall-clock data so repeated runs produce identical streams.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const nlohmann::json& record);
  void epoch(const RunRecord& run, const EpochRecord& e);

 private:
  std::mutex mutex_;
  std::unique_ptr<std::ofstream> out_;
};

struct TrainResult {
  RunRecord record;
  std::unique_ptr<Model> model;
  NormStats norm;
};

struct TrainOptions {
  MetricsWriter* metrics = nullptr;
  /// Writes the final parameters (or the last good ones on divergence).
  std::optional<std::filesystem::path> checkpoint;
  bool evaluate_test = true;
  std::string run_id = "run";
};

/// Trains on every labeled fold except config.validation_fold, validates on
/// that fold each epoch and stops after `patience` epochs without a better
/// validation UA. Throws NumericError on divergence after saving the last
/// good parameters when a checkpoint path is set.
TrainResult train(const TrainConfig& config, const Dataset& data, const TrainOptions& options = {});

struct KFoldResult {
  std::vector<RunRecord> folds;
  std::size_t selected = 0;
  MetricsReport test;
  std::unique_ptr<Model> model;
  NormStats norm;
};

/// One run per validation fold; the run with the best validation UA (ties
/// to the earliest) is evaluated once on the test split.
KFoldResult kfold_select(const TrainConfig& config, const Dataset& data, std::size_t k = 5,
                         const TrainOptions& options = {}, std::size_t jobs = 1);

struct AblationCell {
  std::string setting;  // "fully" or "semi"
  bool reconstruction = false, matching = false;
  std::string name() const;
};

/// The six cells: fully {vanilla, MMD-only, rec-only, rec+MMD} and semi
/// {MMD-only, rec+MMD}.
std::vector<AblationCell> ablation_grid();
TrainConfig ablation_config(const TrainConfig& base, const AblationCell& cell);

struct AblationRow {
  AblationCell cell;
  std::vector<RunRecord> runs;  // one per seed
  double mean_ua = 0, mean_wap = 0;
};

std::vector<AblationRow> ablate(const TrainConfig& base, const Dataset& data,
                                std::span<const std::uint64_t> seeds, const TrainOptions& options = {},
                                std::size_t jobs = 1);

struct SweepPoint {
  std::size_t quota = 0;
  std::vector<RunRecord> runs;  // one per seed
  double mean_ua = 0, mean_wap = 0;
};

/// The run for one sweep point: quota 0 is fully supervised with omega 0,
/// any other quota a semi run on that many unlabeled samples.
TrainConfig sweep_config(const TrainConfig& base, std::size_t quota);

/// Quota 0 is a fully-supervised run; other quotas are semi runs. Throws
/// ConfigError for unsorted quotas or a quota above the pool size.
std::vector<SweepPoint> sweep_unlabeled(const TrainConfig& base, const Dataset& data,
                                        std::span<const std::size_t> quotas,
                                        std::span<const std::uint64_t> seeds,
                                        const TrainOptions& options = {}, std::size_t jobs = 1);

/// Least-squares slope of y over x.
double ls_slope(std::span<const double> x, std::span<const double> y);

/// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first failure.
void run_parallel(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Run directories and reports

/// First 16 hex digits of a 64-bit FNV-1a hash of the canonical JSON dump.
std::string config_hash(const nlohmann::json& config);

/// <base>/<kind>-<hash>, or with -1, -2, ... appended when that exists.
/// The directory is created.
std::filesystem::path make_run_dir(const std::filesystem::path& base, std::string_view kind,
                                   const nlohmann::json& config);

void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& m);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::pair<std::string, MetricsReport>>& rows);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points);

/// Checkpoint of a trained model with everything evaluation needs.
void save_model(const std::filesystem::path& path, const Model& model, const NormStats& norm,
                const FeatureDims& dims);
struct LoadedModel {
  std::unique_ptr<Model> model;
  NormStats norm;
  FeatureDims dims;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace xmodal

// include/xmodal/data.hpp

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

// Utterance samples, the on-disk dataset format, normalisation, padding,
// unlabeled-pool balancing and the synthetic corpus generator.
//
// A dataset directory holds manifest.json plus one binary file per modality.
// Each binary record is: int64 rank, rank x int64 dims, float32 values, all
// little-endian. The manifest gives every sample's byte offsets, label,
// fold, split, duration and a checksum over its records. Ground truth for
// the unlabeled pool lives in sealed/unlabeled_truth.json, which only
// sealed.hpp reads.

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmodal/dae.hpp"
#include "xmodal/objective.hpp"

namespace xmodal {

enum class Split { kLabeled, kTest, kUnlabeled };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct UtteranceSample {
  std::string id;
  std::optional<Tensor> acoustic;         // [F_a]
  std::optional<Tensor> visual, lexical;  // [T, F], unpadded
  std::optional<int> label;
  double duration_seconds = 0;
  int fold = -1;  // labeled samples only
  Split split = Split::kLabeled;
};

struct FeatureDims {
  std::size_t acoustic = 64, visual = 16, lexical = 32;
  std::size_t visual_steps = 6, lexical_steps = 8;
};

/// Per-dimension mean and std for each modality present.
struct NormStats {
  std::optional<Tensor> acoustic_mean, acoustic_std;
  std::optional<Tensor> visual_mean, visual_std;
  std::optional<Tensor> lexical_mean, lexical_std;
  std::string fitted_on;
};

inline constexpr double kStdFloor = 1e-6;

nlohmann::json norm_json(const NormStats& n);
NormStats norm_from_json(const nlohmann::json& j);
nlohmann::json dims_json(const FeatureDims& d);
FeatureDims dims_from_json(const nlohmann::json& j);

/// Population mean/std per feature dimension; sequence statistics use every
/// row of every sample. Throws ConfigError for fewer than 2 samples.
NormStats z_normalize_fit(std::span<const UtteranceSample* const> train, std::string fitted_on = "");
/// (x - mean) / std for each present modality.
UtteranceSample z_normalize_apply(const UtteranceSample& s, const NormStats& stats);

/// Exactly target rows: zero rows appended, or the first target rows kept.
Tensor pad_or_truncate(const Tensor& seq, std::size_t target_steps);

/// Percentile with linear interpolation between closest ranks.
double crop_width_from_labeled(std::span<const double> durations, double percentile = 80.0);

/// Indices into a pool with the given pseudo labels such that every class
/// has exactly `cap` entries: classes above cap are subsampled without
/// replacement, those below keep all members and add cap - n duplicates
/// drawn with replacement. Throws ConfigError naming any empty class.
std::vector<std::size_t> balance_unlabeled(std::span<const int> pseudo_labels, std::size_t classes,
                                           std::size_t cap, Rng& rng);

struct ManifestRecord {
  std::string id;
  Split split = Split::kLabeled;
  std::optional<int> label;
  double duration_seconds = 0;
  int fold = -1;
  std::array<std::int64_t, 3> offsets{-1, -1, -1};  // A, V, L; -1 when absent
  std::uint64_t checksum = 0;
};

struct DatasetManifest {
  int version = 1;
  FeatureDims dims;
  std::size_t classes = 4;
  std::vector<std::string> class_names;
  std::size_t folds = 5;
  std::vector<ManifestRecord> records;
  NormStats norm;
  nlohmann::json generator;  // echo of the generating config
  std::filesystem::path root;

  std::size_t labeled_count() const;
  std::size_t unlabeled_count() const;
  const ManifestRecord& record(std::string_view id) const;
};

/// Writes the feature files and manifest into `dir`. Offsets and checksums
/// in `manifest.records` are filled in; records follow `samples` order.
void write_dataset(const std::filesystem::path& dir, DatasetManifest& manifest,
                   std::span<const UtteranceSample> samples);

DatasetManifest load_manifest(const std::filesystem::path& dir);
/// Reads and validates one sample; IoError names the id on a checksum or
/// shape mismatch or a truncated file.
UtteranceSample read_sample(const DatasetManifest& manifest, std::string_view id);

struct Dataset {
  DatasetManifest manifest;
  std::vector<UtteranceSample> labeled, test, unlabeled;

  /// Labeled samples of the given folds.
  std::vector<const UtteranceSample*> folds(std::span<const int> which) const;
};

Dataset load_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Batching

/// Normalised, padded tensors for a set of samples, ready for gathering
/// batches by row.
struct PreparedSet {
  std::optional<Tensor> acoustic;         // [N, F_a]
  std::optional<Tensor> visual, lexical;  // [N, T, F]
  std::vector<std::uint8_t> visual_mask, lexical_mask;  // N*T
  std::vector<int> labels;  // empty when unlabeled
  std::vector<std::string> ids;

  std::size_t size() const { return ids.size(); }
};

/// Throws ConfigError when a sample lacks a modality in `modalities`.
PreparedSet prepare(std::span<const UtteranceSample* const> samples, const NormStats& stats,
                    const FeatureDims& dims, ModalitySet modalities, bool with_labels);

Batch gather(const PreparedSet& set, std::span<const std::size_t> rows, bool with_labels);

/// Model shapes matching the dataset's feature dimensions.
DAEConfig fit_dae_config(DAEConfig base, const FeatureDims& dims);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t classes = 4;
  FeatureDims dims;
  std::size_t latent_dim = 8;        // emotion latent
  double prototype_scale = 1.0;      // spread of class prototypes
  double noise = 1.0;                // scales every random component
  double jitter = 1.0;               // within-class latent std (x noise)
  double observation_noise = 0.5;    // on mapped features (x noise)
  double nuisance_scale = 1.0;       // nuisance dims std (x noise)
  std::size_t nuisance_acoustic = 16, nuisance_visual = 4, nuisance_lexical = 8;
  /// Per-modality private latent factors fed through the modality map
  /// together with the shared emotion latent.
  std::size_t private_dim = 0;
  double private_scale = 1.0;
  double drift = 0.3;                // per-step drift std (x noise)
  double map_gain = 1.5;             // pre-tanh gain of the modality maps
  std::size_t labeled = 400, test = 1000, unlabeled = 2000, folds = 5;
  std::vector<double> unlabeled_priors;  // empty: uniform
  double duration_log_mean = 1.3, duration_log_std = 0.45;
  double crop_percentile = 80.0, crop_target = 7.2;
  double visual_rate = 1.0, lexical_rate = 1.4;  // steps per second
  double drop_rate = 0.11;           // unlabeled candidates lost to detection

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SynthReport {
  std::filesystem::path dir;
  std::vector<std::size_t> labeled_counts, test_counts, unlabeled_counts;
  std::size_t dropped = 0;
  double crop_width = 0;
  double probe_accuracy = 0;  // linear probe on raw acoustic features
};

/// Generates the corpus into `dir` and runs the linear-probe oracle.
SynthReport synth_generate(const SynthConfig& config, const std::filesystem::path& dir);

/// Test accuracy of a softmax-regression probe trained on z-normalised
/// train features [N, F].
double linear_probe_accuracy(const Tensor& train_x, std::span<const int> train_y,
                             const Tensor& test_x, std::span<const int> test_y,
                             std::size_t classes, std::uint64_t seed);

}  // namespace xmodal

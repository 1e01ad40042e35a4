// include/xmodal/objective.hpp

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

// The full multi-modal model (per-modality auto-encoders plus a classifier
// over concatenated latents) and the composed training objectives:
//
//   l_s    = l_cls + alpha * l_rec + beta * (l_pair + l_unpair)
//   l_u    = alpha * l_u_rec + beta * (l_u_pair + l_u_unpair)
//   l_semi = l_s + omega * l_u

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xmodal/dae.hpp"
#include "xmodal/mmd.hpp"

namespace xmodal {

struct ModalitySet {
  bool acoustic = true, visual = true, lexical = true;
  std::size_t count() const { return acoustic + visual + lexical; }
  /// "A+V+L", "A+L", ...
  std::string label() const;
  static ModalitySet parse(std::string_view text);
};

/// Hidden layer in -> d with ReLU, then d -> classes.
class Classifier {
 public:
  Classifier(std::size_t in, std::size_t hidden, std::size_t classes, ParameterSet& params, Rng& rng);
  Var logits(Graph& g, Var features) const;
  std::size_t in() const { return hidden_.in; }
  std::size_t classes() const { return out_.out; }

 private:
  nn::Linear hidden_, out_;
};

class Model {
 public:
  Model(const DAEConfig& dae, ModalitySet modalities, std::size_t classes, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const DAEConfig& dae_config() const { return dae_config_; }
  ModalitySet modalities() const { return modalities_; }
  std::size_t classes() const { return classifier->classes(); }

  ParameterSet params;
  std::optional<AcousticDAE> acoustic;
  std::optional<SequenceDAE> visual, lexical;
  std::optional<Classifier> classifier;
  /// Parameters of the classifier head only.
  std::vector<Parameter*> classifier_params() const { return classifier_params_; }

 private:
  DAEConfig dae_config_;
  ModalitySet modalities_;
  std::vector<Parameter*> classifier_params_;
};

/// One batch of model inputs. Absent modalities stay empty. Masks mark real
/// (non-padded) time steps with 1, B*T entries. labels is empty for an
/// unlabeled batch.
struct Batch {
  std::optional<Tensor> acoustic, visual, lexical;
  std::vector<std::uint8_t> visual_mask, lexical_mask;
  std::vector<int> labels;

  std::size_t size() const;
  bool labeled() const { return !labels.empty(); }
};

struct LossWeights {
  double alpha = 0.2, beta = 0.1, omega = 0.3;
  void validate() const;
};

struct ObjectiveConfig {
  LossWeights weights;
  mmd::KernelConfig kernel;
  mmd::MatchingConfig matching;
  /// Drops the unpaired term from both streams.
  bool unpaired = true;
};

struct LossBreakdown {
  double l_cls = 0, l_rec = 0, l_pair = 0, l_unpair = 0;
  double l_u_rec = 0, l_u_pair = 0, l_u_unpair = 0;
  double l_s = 0, l_u = 0, l_semi = 0;
  /// Sums of mismatched-set estimates before negation and clamping.
  double unpair_raw = 0, u_unpair_raw = 0;
};

/// Identity residuals of the composition rules; all three are ~0.
struct CompositionCheck {
  double supervised, unsupervised, semi;
};
CompositionCheck check_composition(const LossBreakdown& b, const LossWeights& w);

struct Encoded {
  mmd::Latents latents;
  Var rec;  // sum of per-modality reconstruction losses
};

/// Encodes every present modality of the batch and sums the reconstruction
/// losses. Throws ConfigError when the batch lacks a modality the model uses.
Encoded encode_batch(Graph& g, const Model& model, const Batch& batch);

/// Classifier input: latents concatenated in A, V, L order.
Var fuse(const mmd::Latents& z);

/// softmax(C([z_a; z_v; z_l])) rows.
Tensor classify(const Model& model, const Batch& batch);
Tensor classify(Graph& g, const Model& model, const mmd::Latents& z);

/// Mean cross entropy of class probabilities `probs` [B,K]; probabilities
/// are clamped to 1e-300 for the log. Throws ConfigError on a bad label.
double classification_loss(const Tensor& probs, const std::vector<int>& labels);

struct Objective {
  LossBreakdown breakdown;
  Var total;
};

/// l_s on a labeled batch. `rng` draws the unpaired derangements.
Objective supervised_loss(Graph& g, const Model& model, const Batch& labeled,
                          ObjectiveConfig& config, Rng& rng);
/// l_u on an unlabeled batch. Labels, if present, are ignored with a warning.
Objective unsupervised_loss(Graph& g, const Model& model, const Batch& unlabeled,
                            ObjectiveConfig& config, Rng& rng);
/// l_semi. An empty or absent unlabeled batch reduces to supervised_loss.
Objective semi_loss(Graph& g, const Model& model, const Batch& labeled, const Batch* unlabeled,
                    ObjectiveConfig& config, Rng& labeled_rng, Rng& unlabeled_rng);

}  // namespace xmodal

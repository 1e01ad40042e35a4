// src/objective.cpp

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

#include "xmodal/objective.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

#include "xmodal/error.hpp"

namespace xmodal {

std::string ModalitySet::label() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += "+";
    s += name;
  };
  add(acoustic, "A");
  add(visual, "V");
  add(lexical, "L");
  return s;
}

ModalitySet ModalitySet::parse(std::string_view text) {
  ModalitySet m{false, false, false};
  for (char c : text) {
    switch (c) {
      case 'A': case 'a': m.acoustic = true; break;
      case 'V': case 'v': m.visual = true; break;
      case 'L': case 'l': m.lexical = true; break;
      case '+': case ',': case ' ': break;
      default: throw ConfigError("modalities: unknown modality '" + std::string(1, c) + "' in \"" +
                                 std::string(text) + "\"");
    }
  }
  if (m.count() == 0) throw ConfigError("modalities: none selected");
  return m;
}

Classifier::Classifier(std::size_t in, std::size_t hidden, std::size_t classes, ParameterSet& params,
                       Rng& rng)
    : hidden_(nn::Linear::make(params, "classifier.hidden", in, hidden, rng)),
      out_(nn::Linear::make(params, "classifier.out", hidden, classes, rng)) {
  if (classes < 2) throw ConfigError("classifier: need at least 2 classes");
}

Var Classifier::logits(Graph& g, Var features) const {
  if (features.shape().size() != 2 || features.shape()[1] != in())
    throw ShapeError("classifier: expected features [Bx" + std::to_string(in()) + "], got " +
                     shape_str(features.shape()));
  return out_(g, ops::relu(hidden_(g, features)));
}

Model::Model(const DAEConfig& dae, ModalitySet modalities, std::size_t classes, std::uint64_t seed)
    : dae_config_(dae), modalities_(modalities) {
  dae.validate();
  if (modalities.count() == 0) throw ConfigError("model: no modalities");
  if (modalities.acoustic) {
    Rng rng = make_rng(seed, "init/acoustic");
    acoustic.emplace(dae.acoustic, dae.latent_dim, params, rng);
  }
  if (modalities.visual) {
    Rng rng = make_rng(seed, "init/visual");
    visual.emplace(Modality::kVisual, dae.visual, dae.latent_dim, params, rng);
  }
  if (modalities.lexical) {
    Rng rng = make_rng(seed, "init/lexical");
    lexical.emplace(Modality::kLexical, dae.lexical, dae.latent_dim, params, rng);
  }
  const std::size_t before = params.size();
  Rng rng = make_rng(seed, "init/classifier");
  classifier.emplace(modalities.count() * dae.latent_dim, dae.latent_dim, classes, params, rng);
  const auto all = params.all();
  classifier_params_.assign(all.begin() + static_cast<std::ptrdiff_t>(before), all.end());
}

std::size_t Batch::size() const {
  if (acoustic) return acoustic->dim(0);
  if (visual) return visual->dim(0);
  if (lexical) return lexical->dim(0);
  return 0;
}

void LossWeights::validate() const {
  for (double w : {alpha, beta, omega})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ConfigError("loss weights must be finite and non-negative");
}

CompositionCheck check_composition(const LossBreakdown& b, const LossWeights& w) {
  return {b.l_s - (b.l_cls + w.alpha * b.l_rec + w.beta * (b.l_pair + b.l_unpair)),
          b.l_u - (w.alpha * b.l_u_rec + w.beta * (b.l_u_pair + b.l_u_unpair)),
          b.l_semi - (b.l_s + w.omega * b.l_u)};
}

Encoded encode_batch(Graph& g, const Model& model, const Batch& batch) {
  const ModalitySet m = model.modalities();
  auto require = [&](bool present, const char* name) {
    if (!present) throw ConfigError(std::string("batch: missing ") + name + " modality");
  };
  Encoded out;
  std::vector<Var> recs;
  if (m.acoustic) {
    require(batch.acoustic.has_value(), "acoustic");
    Var x = g.constant(*batch.acoustic);
    Var z = model.acoustic->encode(g, x);
    recs.push_back(reconstruction_loss(model.acoustic->decode(g, z),
                                       reconstruction_target(Modality::kAcoustic, x)));
    out.latents.acoustic = z;
  }
  if (m.visual) {
    require(batch.visual.has_value(), "visual");
    Var x = g.constant(*batch.visual);
    Var z = model.visual->encode(g, x, batch.visual_mask);
    recs.push_back(reconstruction_loss(model.visual->decode(g, z),
                                       reconstruction_target(Modality::kVisual, x)));
    out.latents.visual = z;
  }
  if (m.lexical) {
    require(batch.lexical.has_value(), "lexical");
    Var x = g.constant(*batch.lexical);
    Var z = model.lexical->encode(g, x, batch.lexical_mask);
    recs.push_back(reconstruction_loss(model.lexical->decode(g, z),
                                       reconstruction_target(Modality::kLexical, x)));
    out.latents.lexical = z;
  }
  out.rec = recs.front();
  for (std::size_t i = 1; i < recs.size(); ++i) out.rec = ops::add(out.rec, recs[i]);
  return out;
}

Var fuse(const mmd::Latents& z) {
  std::vector<Var> parts;
  for (const auto* p : {&z.acoustic, &z.visual, &z.lexical})
    if (*p) parts.push_back(**p);
  if (parts.size() == 1) return parts.front();
  return ops::concat(parts, 1);
}

Tensor classify(Graph& g, const Model& model, const mmd::Latents& z) {
  return ops::softmax(model.classifier->logits(g, fuse(z))).value();
}

Tensor classify(const Model& model, const Batch& batch) {
  Graph g;
  const ModalitySet m = model.modalities();
  mmd::Latents z;
  if (m.acoustic) z.acoustic = model.acoustic->encode(g, g.constant(*batch.acoustic));
  if (m.visual) z.visual = model.visual->encode(g, g.constant(*batch.visual), batch.visual_mask);
  if (m.lexical)
    z.lexical = model.lexical->encode(g, g.constant(*batch.lexical), batch.lexical_mask);
  return classify(g, model, z);
}

double classification_loss(const Tensor& probs, const std::vector<int>& labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size() || labels.empty())
    throw ShapeError("classification_loss: expected [" + std::to_string(labels.size()) +
                     "xK] probabilities, got " + shape_str(probs.shape()));
  const std::size_t k = probs.dim(1);
  double total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw ConfigError("classification_loss: label " + std::to_string(labels[i]) +
                        " outside [0," + std::to_string(k) + ")");
    total -= std::log(std::max(probs[i * k + static_cast<std::size_t>(labels[i])], 1e-300));
  }
  return total / static_cast<double>(labels.size());
}

namespace {

struct StreamTerms {
  Encoded enc;
  Var pair, unpair;
  double unpair_raw = 0;
};

// Reconstruction and matching terms shared by both streams.
StreamTerms stream_terms(Graph& g, const Model& model, const Batch& batch,
                         ObjectiveConfig& config, Rng& rng) {
  StreamTerms t;
  t.enc = encode_batch(g, model, batch);
  const Var zero = g.constant(Tensor::scalar(0.0));
  t.pair = t.unpair = zero;
  if (model.modalities().count() < 2) return t;
  t.pair = mmd::pair_loss(t.enc.latents, config.kernel, config.matching);
  if (!config.unpaired) return t;
  const std::size_t groups = mmd::group_count(batch.size(), config.matching);
  const std::size_t pairs =
      mmd::matching_pairs(t.enc.latents, config.matching.include_visual_lexical).size();
  std::vector<std::vector<std::size_t>> perms;
  for (std::size_t p = 0; p < pairs; ++p) perms.push_back(derangement(rng, groups));
  auto term = mmd::unpair_loss(t.enc.latents, config.kernel, perms, config.matching);
  t.unpair = term.loss;
  t.unpair_raw = term.raw;
  return t;
}

Var weighted_sum(Var rec, Var pair, Var unpair, const LossWeights& w) {
  return ops::add(ops::scalar_mul(rec, w.alpha), ops::scalar_mul(ops::add(pair, unpair), w.beta));
}

}  // namespace

Objective supervised_loss(Graph& g, const Model& model, const Batch& labeled,
                          ObjectiveConfig& config, Rng& rng) {
  config.weights.validate();
  if (!labeled.labeled()) throw ConfigError("supervised_loss: batch has no labels");
  if (labeled.labels.size() != labeled.size())
    throw ShapeError("supervised_loss: " + std::to_string(labeled.labels.size()) +
                     " labels for a batch of " + std::to_string(labeled.size()));
  StreamTerms t = stream_terms(g, model, labeled, config, rng);
  Var cls = ops::cross_entropy(model.classifier->logits(g, fuse(t.enc.latents)), labeled.labels);
  Objective out;
  out.total = ops::add(cls, weighted_sum(t.enc.rec, t.pair, t.unpair, config.weights));
  auto& b = out.breakdown;
  const auto& w = config.weights;
  b.l_cls = cls.item();
  b.l_rec = t.enc.rec.item();
  b.l_pair = t.pair.item();
  b.l_unpair = t.unpair.item();
  b.unpair_raw = t.unpair_raw;
  b.l_s = b.l_cls + w.alpha * b.l_rec + w.beta * (b.l_pair + b.l_unpair);
  b.l_semi = b.l_s;
  return out;
}

Objective unsupervised_loss(Graph& g, const Model& model, const Batch& unlabeled,
                            ObjectiveConfig& config, Rng& rng) {
  config.weights.validate();
  if (unlabeled.labeled())
    spdlog::warn("unsupervised_loss: batch carries labels; they are ignored");
  StreamTerms t = stream_terms(g, model, unlabeled, config, rng);
  Objective out;
  out.total = weighted_sum(t.enc.rec, t.pair, t.unpair, config.weights);
  auto& b = out.breakdown;
  const auto& w = config.weights;
  b.l_u_rec = t.enc.rec.item();
  b.l_u_pair = t.pair.item();
  b.l_u_unpair = t.unpair.item();
  b.u_unpair_raw = t.unpair_raw;
  b.l_u = w.alpha * b.l_u_rec + w.beta * (b.l_u_pair + b.l_u_unpair);
  b.l_semi = 0.0;
  return out;
}

Objective semi_loss(Graph& g, const Model& model, const Batch& labeled, const Batch* unlabeled,
                    ObjectiveConfig& config, Rng& labeled_rng, Rng& unlabeled_rng) {
  Objective s = supervised_loss(g, model, labeled, config, labeled_rng);
  if (unlabeled == nullptr || unlabeled->size() == 0) {
    spdlog::info("semi_loss: empty unlabeled batch, using the supervised loss");
    return s;
  }
  Objective u = unsupervised_loss(g, model, *unlabeled, config, unlabeled_rng);
  Objective out;
  out.breakdown = s.breakdown;
  auto& b = out.breakdown;
  b.l_u_rec = u.breakdown.l_u_rec;
  b.l_u_pair = u.breakdown.l_u_pair;
  b.l_u_unpair = u.breakdown.l_u_unpair;
  b.u_unpair_raw = u.breakdown.u_unpair_raw;
  b.l_u = u.breakdown.l_u;
  b.l_semi = b.l_s + config.weights.omega * b.l_u;
  out.total = ops::add(s.total, ops::scalar_mul(u.total, config.weights.omega));
  return out;
}

}  // namespace xmodal

// src/train_config.cpp

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

#include <cstdio>
#include <fstream>

#include "xmodal/error.hpp"
#include "xmodal/training.hpp"

namespace xmodal {

using nlohmann::json;

std::string_view mode_name(TrainMode m) { return m == TrainMode::kFully ? "fully" : "semi"; }

TrainMode parse_mode(std::string_view s) {
  if (s == "fully") return TrainMode::kFully;
  if (s == "semi") return TrainMode::kSemi;
  throw ConfigError("mode: expected \"fully\" or \"semi\", got \"" + std::string(s) + "\"");
}

void TrainConfig::validate() const {
  if (modalities.count() == 0) throw ConfigError("train: no modalities selected");
  if (mode == TrainMode::kSemi && modalities.count() < 2)
    throw ConfigError("train: semi mode needs at least two modalities, got " + modalities.label());
  if (batch_size < 2) throw ConfigError("train: batch_size must be at least 2");
  if (!(lr > 0)) throw ConfigError("train: lr must be positive");
  if (max_epochs == 0 || patience == 0) throw ConfigError("train: max_epochs and patience must be positive");
  if (validation_fold < 0) throw ConfigError("train: validation_fold must be non-negative");
  if (kernel.policy == mmd::SigmaPolicy::kFixed && !(kernel.sigma > 0))
    throw ConfigError("train: fixed kernel sigma must be positive");
  weights.validate();
  dae.validate();
  if (modalities.count() >= 2) mmd::group_count(batch_size, matching);
}

namespace {

// Copies `patch` into `base`, refusing keys `base` does not have. Objects
// merge recursively; anything else is replaced.
void merge_strict(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (base[key].is_object() && value.is_object())
      merge_strict(base[key], value, path);
    else
      base[key] = value;
  }
}

json conv_json(const ConvSpec& c) {
  return {{"out_channels", c.out_channels}, {"kernel", c.kernel}, {"stride", c.stride}, {"pad", c.pad}};
}

ConvSpec conv_from_json(const json& j) {
  json base = conv_json(ConvSpec{});
  merge_strict(base, j, "convs[]");
  return {base.at("out_channels"), base.at("kernel"), base.at("stride"), base.at("pad")};
}

json sequence_json(const SequenceConfig& c) {
  json convs = json::array();
  for (const auto& cv : c.convs) convs.push_back(conv_json(cv));
  return {{"steps", c.steps}, {"features", c.features}, {"heads", c.heads}, {"blocks", c.blocks},
          {"convs", convs}, {"hidden", c.hidden}, {"padding_mask", c.padding_mask}};
}

SequenceConfig sequence_from_json(const json& j) {
  SequenceConfig c;
  c.steps = j.at("steps");
  c.features = j.at("features");
  c.heads = j.at("heads");
  c.blocks = j.at("blocks");
  for (const auto& cv : j.at("convs")) c.convs.push_back(conv_from_json(cv));
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.padding_mask = j.at("padding_mask");
  return c;
}

template <class F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

void to_json(json& j, const DAEConfig& c) {
  j = {{"latent_dim", c.latent_dim},
       {"acoustic", {{"features", c.acoustic.features}, {"hidden", c.acoustic.hidden}}},
       {"visual", sequence_json(c.visual)},
       {"lexical", sequence_json(c.lexical)}};
}

void from_json(const json& j, DAEConfig& c) {
  json base = c;
  merge_strict(base, j, "dae");
  guarded([&] {
    c.latent_dim = base.at("latent_dim");
    c.acoustic.features = base.at("acoustic").at("features");
    c.acoustic.hidden = base.at("acoustic").at("hidden").get<std::vector<std::size_t>>();
    c.visual = sequence_from_json(base.at("visual"));
    c.lexical = sequence_from_json(base.at("lexical"));
    return 0;
  });
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"mode", mode_name(c.mode)},
       {"modalities", c.modalities.label()},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"max_epochs", c.max_epochs},
       {"patience", c.patience},
       {"restore_best", c.restore_best},
       {"weights", {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"omega", c.weights.omega}}},
       {"kernel",
        {{"policy", c.kernel.policy == mmd::SigmaPolicy::kFixed ? "fixed" : "median"},
         {"sigma", c.kernel.policy == mmd::SigmaPolicy::kFixed ? c.kernel.sigma : 1.0}}},
       {"matching",
        {{"group_size", c.matching.group_size},
         {"include_visual_lexical", c.matching.include_visual_lexical},
         {"unpair_floor", c.matching.unpair_floor}}},
       {"unpaired", c.unpaired},
       {"seed", c.seed},
       {"unlabeled_quota", c.unlabeled_quota},
       {"balance_cap", c.balance_cap},
       {"validation_fold", c.validation_fold},
       {"dae", c.dae}};
}

void from_json(const json& j, TrainConfig& c) {
  json base = c;
  merge_strict(base, j, "");
  guarded([&] {
    c.mode = parse_mode(base.at("mode").get<std::string>());
    c.modalities = ModalitySet::parse(base.at("modalities").get<std::string>());
    c.batch_size = base.at("batch_size");
    c.lr = base.at("lr");
    c.max_epochs = base.at("max_epochs");
    c.patience = base.at("patience");
    c.restore_best = base.at("restore_best");
    c.weights.alpha = base.at("weights").at("alpha");
    c.weights.beta = base.at("weights").at("beta");
    c.weights.omega = base.at("weights").at("omega");
    const std::string policy = base.at("kernel").at("policy");
    if (policy != "fixed" && policy != "median")
      throw ConfigError("kernel.policy: expected \"fixed\" or \"median\", got \"" + policy + "\"");
    c.kernel.policy = policy == "fixed" ? mmd::SigmaPolicy::kFixed : mmd::SigmaPolicy::kMedianHeuristic;
    c.kernel.sigma = base.at("kernel").at("sigma");
    c.matching.group_size = base.at("matching").at("group_size");
    c.matching.include_visual_lexical = base.at("matching").at("include_visual_lexical");
    c.matching.unpair_floor = base.at("matching").at("unpair_floor");
    c.unpaired = base.at("unpaired");
    c.seed = base.at("seed");
    c.unlabeled_quota = base.at("unlabeled_quota");
    c.balance_cap = base.at("balance_cap");
    c.validation_fold = base.at("validation_fold");
    DAEConfig dae = c.dae;
    from_json(base.at("dae"), dae);
    c.dae = dae;
    return 0;
  });
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path make_run_dir(const std::filesystem::path& base, std::string_view kind,
                                   const json& config) {
  const std::string stem = std::string(kind) + "-" + config_hash(config);
  std::filesystem::path dir = base / stem;
  for (int i = 1; std::filesystem::exists(dir); ++i) dir = base / (stem + "-" + std::to_string(i));
  std::filesystem::create_directories(dir);
  return dir;
}

void save_model(const std::filesystem::path& path, const Model& model, const NormStats& norm,
                const FeatureDims& dims) {
  const json meta = {{"dae", model.dae_config()},
                     {"modalities", model.modalities().label()},
                     {"classes", model.classes()},
                     {"normalization", norm_json(norm)},
                     {"dims", dims_json(dims)}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_checkpoint(path, meta.dump(), model.params);
}

LoadedModel load_model(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ck.config_text);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  LoadedModel out;
  guarded([&] {
    DAEConfig dae = DAEConfig::toy();
    from_json(meta.at("dae"), dae);
    out.model = std::make_unique<Model>(dae, ModalitySet::parse(meta.at("modalities").get<std::string>()),
                                        meta.at("classes").get<std::size_t>(), 0);
    out.norm = norm_from_json(meta.at("normalization"));
    out.dims = dims_from_json(meta.at("dims"));
    return 0;
  });
  load_parameters(ck, out.model->params);
  return out;
}

}  // namespace xmodal

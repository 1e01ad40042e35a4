// src/synth.cpp

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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "xmodal/data.hpp"
#include "xmodal/error.hpp"
#include "xmodal/sealed.hpp"

namespace xmodal {

using nlohmann::json;

void SynthConfig::validate() const {
  auto fail = [](const std::string& why) { return ConfigError("synth: " + why); };
  if (classes < 2) throw fail("need at least 2 classes");
  if (latent_dim == 0) throw fail("latent_dim must be positive");
  if (nuisance_acoustic >= dims.acoustic || nuisance_visual >= dims.visual ||
      nuisance_lexical >= dims.lexical)
    throw fail("nuisance dimensions must leave at least one signal dimension per modality");
  if (dims.visual_steps == 0 || dims.lexical_steps == 0) throw fail("sequence lengths must be positive");
  if (folds < 2) throw fail("need at least 2 folds");
  if (labeled < classes * folds) throw fail("labeled set too small for stratified folds");
  if (test < classes) throw fail("test set smaller than the class count");
  if (!unlabeled_priors.empty()) {
    if (unlabeled_priors.size() != classes) throw fail("unlabeled_priors must have one entry per class");
    double total = 0;
    for (double p : unlabeled_priors) {
      if (!(p >= 0)) throw fail("unlabeled_priors must be non-negative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) throw fail("unlabeled_priors must sum to 1");
  }
  for (double v : {prototype_scale, noise, jitter, observation_noise, nuisance_scale, private_scale, drift,
                   map_gain, duration_log_std})
    if (!(v >= 0) || !std::isfinite(v)) throw fail("scales must be finite and non-negative");
  if (!(crop_percentile > 0 && crop_percentile < 100)) throw fail("crop_percentile must lie in (0, 100)");
  if (!(crop_target > 0)) throw fail("crop_target must be positive");
  if (!(visual_rate > 0 && lexical_rate > 0)) throw fail("step rates must be positive");
  if (!(drop_rate >= 0 && drop_rate < 1)) throw fail("drop_rate must lie in [0, 1)");
}

void to_json(json& j, const SynthConfig& c) {
  j = json{{"seed", c.seed},
           {"classes", c.classes},
           {"dims", {{"acoustic", c.dims.acoustic}, {"visual", c.dims.visual}, {"lexical", c.dims.lexical},
                     {"visual_steps", c.dims.visual_steps}, {"lexical_steps", c.dims.lexical_steps}}},
           {"latent_dim", c.latent_dim},
           {"prototype_scale", c.prototype_scale},
           {"noise", c.noise},
           {"jitter", c.jitter},
           {"observation_noise", c.observation_noise},
           {"nuisance_scale", c.nuisance_scale},
           {"nuisance_acoustic", c.nuisance_acoustic},
           {"nuisance_visual", c.nuisance_visual},
           {"nuisance_lexical", c.nuisance_lexical},
           {"private_dim", c.private_dim},
           {"private_scale", c.private_scale},
           {"drift", c.drift},
           {"map_gain", c.map_gain},
           {"labeled", c.labeled},
           {"test", c.test},
           {"unlabeled", c.unlabeled},
           {"folds", c.folds},
           {"unlabeled_priors", c.unlabeled_priors},
           {"duration_log_mean", c.duration_log_mean},
           {"duration_log_std", c.duration_log_std},
           {"crop_percentile", c.crop_percentile},
           {"crop_target", c.crop_target},
           {"visual_rate", c.visual_rate},
           {"lexical_rate", c.lexical_rate},
           {"drop_rate", c.drop_rate}};
}

void from_json(const json& j, SynthConfig& c) {
  if (!j.is_object()) throw ConfigError("synth: config must be an object");
  json defaults = SynthConfig{};
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("synth: unknown config key '" + key + "'");
    if (key == "dims") {
      if (!value.is_object()) throw ConfigError("synth: dims must be an object");
      for (const auto& [dk, dv] : value.items()) {
        if (!defaults["dims"].contains(dk)) throw ConfigError("synth: unknown config key 'dims." + dk + "'");
        defaults["dims"][dk] = dv;
      }
    } else {
      defaults[key] = value;
    }
  }
  try {
    const json& d = defaults;
    c.seed = d.at("seed");
    c.classes = d.at("classes");
    c.dims.acoustic = d.at("dims").at("acoustic");
    c.dims.visual = d.at("dims").at("visual");
    c.dims.lexical = d.at("dims").at("lexical");
    c.dims.visual_steps = d.at("dims").at("visual_steps");
    c.dims.lexical_steps = d.at("dims").at("lexical_steps");
    c.latent_dim = d.at("latent_dim");
    c.prototype_scale = d.at("prototype_scale");
    c.noise = d.at("noise");
    c.jitter = d.at("jitter");
    c.observation_noise = d.at("observation_noise");
    c.nuisance_scale = d.at("nuisance_scale");
    c.nuisance_acoustic = d.at("nuisance_acoustic");
    c.nuisance_visual = d.at("nuisance_visual");
    c.nuisance_lexical = d.at("nuisance_lexical");
    c.private_dim = d.at("private_dim");
    c.private_scale = d.at("private_scale");
    c.drift = d.at("drift");
    c.map_gain = d.at("map_gain");
    c.labeled = d.at("labeled");
    c.test = d.at("test");
    c.unlabeled = d.at("unlabeled");
    c.folds = d.at("folds");
    c.unlabeled_priors = d.at("unlabeled_priors").get<std::vector<double>>();
    c.duration_log_mean = d.at("duration_log_mean");
    c.duration_log_std = d.at("duration_log_std");
    c.crop_percentile = d.at("crop_percentile");
    c.crop_target = d.at("crop_target");
    c.visual_rate = d.at("visual_rate");
    c.lexical_rate = d.at("lexical_rate");
    c.drop_rate = d.at("drop_rate");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
}

namespace {

// h = W2 tanh(gain * W1 u + b1): latent [r] -> signal [S].
struct ModalityMap {
  std::size_t signal = 0, nuisance = 0;
  std::vector<double> w1, b1, w2;

  ModalityMap(Rng& rng, std::size_t r, std::size_t features, std::size_t nuisance_dims)
      : signal(features - nuisance_dims), nuisance(nuisance_dims) {
    w1.resize(signal * r);
    b1.resize(signal);
    w2.resize(signal * signal);
    for (auto& v : w1) v = normal(rng) / std::sqrt(static_cast<double>(r));
    for (auto& v : b1) v = normal(rng, 0.0, 0.5);
    for (auto& v : w2) v = normal(rng) / std::sqrt(static_cast<double>(signal));
  }

  std::vector<double> operator()(const std::vector<double>& u, double gain) const {
    const std::size_t r = u.size();
    std::vector<double> hidden(signal), out(signal, 0.0);
    for (std::size_t i = 0; i < signal; ++i) {
      double a = b1[i];
      for (std::size_t k = 0; k < r; ++k) a += w1[i * r + k] * u[k];
      hidden[i] = std::tanh(gain * a);
    }
    for (std::size_t i = 0; i < signal; ++i)
      for (std::size_t k = 0; k < signal; ++k) out[i] += w2[i * signal + k] * hidden[k];
    return out;
  }
};

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

struct Generator {
  const SynthConfig& c;
  std::vector<std::vector<double>> prototypes;
  std::array<ModalityMap, 3> maps;

  explicit Generator(const SynthConfig& cfg, Rng map_rng, Rng proto_rng)
      : c(cfg),
        maps{ModalityMap(map_rng, cfg.latent_dim + cfg.private_dim, cfg.dims.acoustic, cfg.nuisance_acoustic),
             ModalityMap(map_rng, cfg.latent_dim + cfg.private_dim, cfg.dims.visual, cfg.nuisance_visual),
             ModalityMap(map_rng, cfg.latent_dim + cfg.private_dim, cfg.dims.lexical, cfg.nuisance_lexical)} {
    prototypes.assign(cfg.classes, std::vector<double>(cfg.latent_dim));
    for (auto& p : prototypes)
      for (auto& v : p) v = normal(proto_rng, 0.0, cfg.prototype_scale);
  }

  std::vector<double> observe(Rng& rng, int m, const std::vector<double>& shared) const {
    std::vector<double> u = shared;
    for (std::size_t i = 0; i < c.private_dim; ++i) u.push_back(c.noise * c.private_scale * normal(rng));
    std::vector<double> x = maps[m](u, c.map_gain);
    for (auto& v : x) v += c.noise * c.observation_noise * normal(rng);
    for (std::size_t i = 0; i < maps[m].nuisance; ++i)
      x.push_back(c.noise * c.nuisance_scale * normal(rng));
    return x;
  }

  Tensor sequence(Rng& rng, int m, const std::vector<double>& u, std::size_t steps,
                  std::size_t nominal) const {
    const std::vector<double> base = observe(rng, m, u);
    const std::size_t f = base.size();
    std::vector<double> drift(f);
    for (auto& v : drift) v = c.noise * c.drift * normal(rng);
    Tensor out({steps, f});
    for (std::size_t t = 0; t < steps; ++t) {
      const double pos = static_cast<double>(t) / static_cast<double>(nominal);
      for (std::size_t j = 0; j < f; ++j)
        out[t * f + j] = as_float(base[j] + pos * drift[j] +
                                  0.5 * c.noise * c.observation_noise * normal(rng));
    }
    return out;
  }

  UtteranceSample make(Rng& rng, std::string id, int label, double duration, Split split) const {
    std::vector<double> u = prototypes[static_cast<std::size_t>(label)];
    for (auto& v : u) v += c.noise * c.jitter * normal(rng);
    UtteranceSample s;
    s.id = std::move(id);
    s.split = split;
    s.duration_seconds = duration;
    if (split != Split::kUnlabeled) s.label = label;
    const auto a = observe(rng, 0, u);
    Tensor at({a.size()});
    for (std::size_t i = 0; i < a.size(); ++i) at[i] = as_float(a[i]);
    s.acoustic = std::move(at);
    auto steps = [&](double rate) {
      return static_cast<std::size_t>(std::max(1.0, std::round(duration * rate)));
    };
    s.visual = sequence(rng, 1, u, steps(c.visual_rate), c.dims.visual_steps);
    s.lexical = sequence(rng, 2, u, steps(c.lexical_rate), c.dims.lexical_steps);
    return s;
  }
};

std::string make_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05zu", prefix, i);
  return buf;
}

// Exactly balanced labels (up to remainder) in random order.
std::vector<int> balanced_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  const auto perm = permutation(rng, n);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = labels[perm[i]];
  return out;
}

std::vector<double> lognormal_durations(Rng& rng, std::size_t n, double mu, double sd) {
  std::vector<double> d(n);
  for (auto& v : d) v = std::exp(mu + sd * normal(rng));
  return d;
}

int draw_class(Rng& rng, const std::vector<double>& priors) {
  double u = uniform(rng, 0.0, 1.0), acc = 0.0;
  for (std::size_t k = 0; k < priors.size(); ++k) {
    acc += priors[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(priors.size() - 1);
}

std::vector<std::string> default_class_names(std::size_t classes) {
  if (classes == 4) return {"neutral", "happy", "sad", "angry"};
  std::vector<std::string> names;
  for (std::size_t k = 0; k < classes; ++k) names.push_back("class" + std::to_string(k));
  return names;
}

}  // namespace

SynthReport synth_generate(const SynthConfig& c, const std::filesystem::path& dir) {
  c.validate();
  const Generator gen(c, make_rng(c.seed, "maps"), make_rng(c.seed, "prototypes"));

  Rng dur_rng = make_rng(c.seed, "durations");
  std::vector<double> lab_dur = lognormal_durations(dur_rng, c.labeled, c.duration_log_mean, c.duration_log_std);
  std::vector<double> test_dur = lognormal_durations(dur_rng, c.test, c.duration_log_mean, c.duration_log_std);
  const double scale = c.crop_target / crop_width_from_labeled(lab_dur, c.crop_percentile);
  for (auto& d : lab_dur) d *= scale;
  for (auto& d : test_dur) d *= scale;

  SynthReport report;
  report.dir = dir;
  report.crop_width = crop_width_from_labeled(lab_dur, c.crop_percentile);
  report.labeled_counts.assign(c.classes, 0);
  report.test_counts.assign(c.classes, 0);
  report.unlabeled_counts.assign(c.classes, 0);

  std::vector<UtteranceSample> samples;
  samples.reserve(c.labeled + c.test + c.unlabeled);

  {
    Rng label_rng = make_rng(c.seed, "labels/labeled");
    Rng rng = make_rng(c.seed, "samples/labeled");
    const auto labels = balanced_labels(label_rng, c.labeled, c.classes);
    // Stratified folds: each class's members are dealt round-robin, the
    // dealer position carrying over between classes.
    std::vector<int> fold(c.labeled);
    std::size_t dealer = 0;
    for (std::size_t k = 0; k < c.classes; ++k)
      for (std::size_t i = 0; i < c.labeled; ++i)
        if (labels[i] == static_cast<int>(k)) fold[i] = static_cast<int>(dealer++ % c.folds);
    for (std::size_t i = 0; i < c.labeled; ++i) {
      auto s = gen.make(rng, make_id('L', i), labels[i], lab_dur[i], Split::kLabeled);
      s.fold = fold[i];
      ++report.labeled_counts[static_cast<std::size_t>(labels[i])];
      samples.push_back(std::move(s));
    }
  }
  {
    Rng label_rng = make_rng(c.seed, "labels/test");
    Rng rng = make_rng(c.seed, "samples/test");
    const auto labels = balanced_labels(label_rng, c.test, c.classes);
    for (std::size_t i = 0; i < c.test; ++i) {
      samples.push_back(gen.make(rng, make_id('T', i), labels[i], test_dur[i], Split::kTest));
      ++report.test_counts[static_cast<std::size_t>(labels[i])];
    }
  }
  std::map<std::string, int> truth;
  {
    const std::vector<double> priors =
        c.unlabeled_priors.empty() ? std::vector<double>(c.classes, 1.0 / static_cast<double>(c.classes))
                                   : c.unlabeled_priors;
    Rng rng = make_rng(c.seed, "samples/unlabeled");
    Rng cand = make_rng(c.seed, "candidates/unlabeled");
    std::size_t kept = 0;
    while (kept < c.unlabeled) {
      const int label = draw_class(cand, priors);
      const double duration = std::min(
          scale * std::exp(c.duration_log_mean + c.duration_log_std * normal(cand)), report.crop_width);
      if (uniform(cand, 0.0, 1.0) < c.drop_rate) {
        ++report.dropped;
        continue;
      }
      const std::string id = make_id('U', kept++);
      truth[id] = label;
      ++report.unlabeled_counts[static_cast<std::size_t>(label)];
      samples.push_back(gen.make(rng, id, label, duration, Split::kUnlabeled));
    }
  }

  DatasetManifest manifest;
  manifest.dims = c.dims;
  manifest.classes = c.classes;
  manifest.class_names = default_class_names(c.classes);
  manifest.folds = c.folds;
  manifest.generator = c;
  std::vector<const UtteranceSample*> lab;
  for (const auto& s : samples)
    if (s.split == Split::kLabeled) lab.push_back(&s);
  manifest.norm = z_normalize_fit(lab, "labeled folds 0-" + std::to_string(c.folds - 1));
  write_dataset(dir, manifest, samples);
  sealed::write_truth(dir, truth);

  Tensor train_x({c.labeled, c.dims.acoustic}), test_x({c.test, c.dims.acoustic});
  std::vector<int> train_y, test_y;
  std::size_t li = 0, ti = 0;
  for (const auto& s : samples) {
    if (s.split == Split::kLabeled) {
      std::copy(s.acoustic->data().begin(), s.acoustic->data().end(), train_x.ptr() + li++ * c.dims.acoustic);
      train_y.push_back(*s.label);
    } else if (s.split == Split::kTest) {
      std::copy(s.acoustic->data().begin(), s.acoustic->data().end(), test_x.ptr() + ti++ * c.dims.acoustic);
      test_y.push_back(*s.label);
    }
  }
  report.probe_accuracy = linear_probe_accuracy(train_x, train_y, test_x, test_y, c.classes, c.seed);
  return report;
}

double linear_probe_accuracy(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                             std::span<const int> test_y, std::size_t classes, std::uint64_t seed) {
  if (train_x.rank() != 2 || test_x.rank() != 2 || train_x.dim(1) != test_x.dim(1))
    throw ShapeError("linear_probe_accuracy: expected [N,F] train and test features");
  if (train_y.size() != train_x.dim(0) || test_y.size() != test_x.dim(0))
    throw ShapeError("linear_probe_accuracy: label count does not match rows");
  const std::size_t n = train_x.dim(0), f = train_x.dim(1);
  std::vector<double> mean(f, 0.0), sd(f, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) mean[j] += train_x[i * f + j] / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) sd[j] += std::pow(train_x[i * f + j] - mean[j], 2) / static_cast<double>(n);
  for (auto& v : sd) v = std::max(std::sqrt(v), kStdFloor);
  auto norm = [&](const Tensor& x) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x[i] - mean[i % f]) / sd[i % f];
    return out;
  };
  const Tensor xtr = norm(train_x), xte = norm(test_x);

  Rng rng = make_rng(seed, "probe");
  Parameter w("probe.weight", xavier_uniform(rng, {f, classes}, f, classes));
  Parameter b("probe.bias", Tensor({classes}));
  Adam adam({.lr = 0.05});
  std::vector<Parameter*> params{&w, &b};
  const std::vector<int> labels(train_y.begin(), train_y.end());
  for (int step = 0; step < 300; ++step) {
    w.zero_grad();
    b.zero_grad();
    Graph g;
    Var logits = ops::bias_add(ops::matmul(g.constant(xtr), g.param(w)), g.param(b));
    g.backward(ops::cross_entropy(logits, labels));
    adam.step(params);
  }
  Graph g;
  const Tensor& logits = ops::bias_add(ops::matmul(g.constant(xte), g.param(w)), g.param(b)).value();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_y.size(); ++i) {
    const double* row = logits.ptr() + i * classes;
    const auto best = static_cast<int>(std::max_element(row, row + classes) - row);
    correct += best == test_y[i];
  }
  return static_cast<double>(correct) / static_cast<double>(test_y.size());
}

}  // namespace xmodal

// tools/xmodal.cpp

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

// Command-line entry point. Exit codes: 0 success, 1 config error,
// 2 runtime or numeric error, 3 check failure.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "xmodal/error.hpp"
#include "xmodal/gradcheck_suite.hpp"
#include "xmodal/run_config.hpp"
#include "xmodal/sealed.hpp"
#include "xmodal/training.hpp"

using namespace xmodal;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kConfigFailure = 1, kRuntimeFailure = 2, kCheckFailure = 3;

struct CommonArgs {
  std::string config, out, data;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON config file");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--data", a.data, "dataset directory");
  cmd->add_option("--seed", a.seed, "overrides every seed in the config");
}

// Effective config with flag overrides applied; `raw` receives the file
// contents for checks on explicitly set keys.
RunConfig resolve(const CommonArgs& a, json* raw = nullptr) {
  json j = json::object();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot open config " + a.config);
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config " + a.config + ": " + e.what());
    }
  }
  if (raw) *raw = j;
  RunConfig c = parse_run_config(j);
  if (!a.out.empty()) c.out = a.out;
  if (!a.data.empty()) c.data = a.data;
  if (a.seed) {
    c.synth.seed = *a.seed;
    c.train.seed = *a.seed;
    c.seeds = {*a.seed};
  }
  return c;
}

fs::path start_run(const RunConfig& c, std::string_view kind) {
  const json effective = c;
  const fs::path dir = make_run_dir(c.out, kind, effective);
  std::ofstream(dir / "effective_config.json") << effective.dump(2) << "\n";
  spdlog::info("run directory {}", dir.string());
  return dir;
}

void print_metrics(const std::string& name, const MetricsReport& m) {
  std::printf("%-12s WAP %.4f  UA %.4f  wF1 %.4f  acc %.4f\n", name.c_str(), m.wap, m.ua, m.weighted_f1,
              m.accuracy);
}

int cmd_gen_synth(const CommonArgs& a) {
  RunConfig c = resolve(a);
  const fs::path dir = a.out.empty() ? c.data : fs::path(a.out);
  std::cout << json(c.synth).dump(2) << "\n";
  const SynthReport r = synth_generate(c.synth, dir);
  const json report = {{"labeled_counts", r.labeled_counts}, {"test_counts", r.test_counts},
                       {"unlabeled_counts", r.unlabeled_counts}, {"dropped", r.dropped},
                       {"crop_width", r.crop_width}, {"probe_accuracy", r.probe_accuracy}};
  std::ofstream(dir / "synth_report.json") << report.dump(2) << "\n";
  std::printf("dataset       %s\n", dir.string().c_str());
  std::printf("labeled       %s\n", json(r.labeled_counts).dump().c_str());
  std::printf("test          %s\n", json(r.test_counts).dump().c_str());
  std::printf("unlabeled     %s (dropped %zu)\n", json(r.unlabeled_counts).dump().c_str(), r.dropped);
  std::printf("crop width    %.4f s\n", r.crop_width);
  std::printf("linear probe  %.4f\n", r.probe_accuracy);
  return kOk;
}

int cmd_train(const CommonArgs& a) {
  json raw;
  RunConfig c = resolve(a, &raw);
  if (c.train.mode == TrainMode::kFully && raw.contains("train") && raw["train"].contains("weights") &&
      raw["train"]["weights"].contains("omega"))
    spdlog::warn("train: omega is ignored in fully-supervised mode");
  const Dataset data = load_dataset(c.data);
  const fs::path dir = start_run(c, "train");
  MetricsWriter metrics(dir / "metrics.jsonl");
  TrainOptions o;
  o.metrics = &metrics;
  o.checkpoint = dir / "model.ckpt";
  o.run_id = "train";
  const TrainResult r = train(c.train, data, o);
  const RunRecord& rec = r.record;
  const MetricsReport& val = rec.epochs.at(rec.best_epoch - 1).validation;
  std::vector<std::pair<std::string, MetricsReport>> rows{{"validation", val}};
  if (rec.test) rows.emplace_back("test", *rec.test);
  write_metrics_csv(dir / "metrics.csv", rows);
  if (rec.test) write_confusion_csv(dir / "confusion.csv", *rec.test);
  std::printf("epochs %zu, best epoch %zu\n", rec.epochs.size(), rec.best_epoch);
  for (const auto& [name, m] : rows) print_metrics(name, m);
  return kOk;
}

int cmd_kfold(const CommonArgs& a) {
  const RunConfig c = resolve(a);
  const Dataset data = load_dataset(c.data);
  const fs::path dir = start_run(c, "kfold");
  MetricsWriter metrics(dir / "metrics.jsonl");
  TrainOptions o;
  o.metrics = &metrics;
  o.checkpoint = dir / "model.ckpt";
  o.run_id = "kfold";
  const KFoldResult r = kfold_select(c.train, data, c.folds, o, c.jobs);
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    rows.emplace_back("fold" + std::to_string(f), r.folds[f].epochs.at(r.folds[f].best_epoch - 1).validation);
    print_metrics(rows.back().first, rows.back().second);
  }
  rows.emplace_back("test", r.test);
  write_metrics_csv(dir / "metrics.csv", rows);
  write_confusion_csv(dir / "confusion.csv", r.test);
  std::printf("selected fold %zu\n", r.selected);
  print_metrics("test", r.test);
  return kOk;
}

int cmd_ablate(const CommonArgs& a) {
  const RunConfig c = resolve(a);
  const Dataset data = load_dataset(c.data);
  const fs::path dir = start_run(c, "ablate");
  MetricsWriter metrics(dir / "metrics.jsonl");
  TrainOptions o;
  o.metrics = &metrics;
  o.run_id = "ablate";
  const auto rows = ablate(c.train, data, c.seeds, o, c.jobs);
  write_ablation_csv(dir / "ablation.csv", rows);
  for (const auto& r : rows) std::printf("%-16s WAP %.4f  UA %.4f\n", r.cell.name().c_str(), r.mean_wap, r.mean_ua);
  return kOk;
}

std::vector<std::size_t> parse_quota_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (v < 0 || used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--quota-list: bad entry '" + item + "'");
    }
  }
  return out;
}

int cmd_sweep(const CommonArgs& a, const std::string& quota_list) {
  RunConfig c = resolve(a);
  if (!quota_list.empty()) c.quotas = parse_quota_list(quota_list);
  const Dataset data = load_dataset(c.data);
  const fs::path dir = start_run(c, "sweep");
  MetricsWriter metrics(dir / "metrics.jsonl");
  TrainOptions o;
  o.metrics = &metrics;
  o.run_id = "sweep";
  const auto points = sweep_unlabeled(c.train, data, c.quotas, c.seeds, o, c.jobs);
  write_sweep_csv(dir / "sweep.csv", points);
  for (const auto& p : points) std::printf("quota %6zu  WAP %.4f  UA %.4f\n", p.quota, p.mean_wap, p.mean_ua);
  return kOk;
}

int cmd_gradcheck(std::size_t seeds, const std::string& sign_flip) {
  GradcheckOptions o;
  o.seeds = seeds;
  if (!sign_flip.empty()) {
    o.sign_flip = op_kind_from_name(sign_flip);
    if (!o.sign_flip) throw ConfigError("--sign-flip: unknown op '" + sign_flip + "'");
  }
  const GradcheckReport r = run_gradcheck_suite(o);
  for (const auto& e : r.entries)
    std::printf("%-30s %-4s max rel err %.3e over %zu tensors\n", e.name.c_str(), e.passed ? "ok" : "FAIL",
                e.max_error, e.checks);
  std::printf("%s (tolerance %.0e)\n", r.passed() ? "PASS" : "FAIL", o.tolerance);
  return r.passed() ? kOk : kCheckFailure;
}

int cmd_eval(const CommonArgs& a, const std::string& checkpoint, const std::string& split) {
  const RunConfig c = resolve(a);
  const LoadedModel m = load_model(checkpoint);
  const Dataset data = load_dataset(c.data);
  std::vector<UtteranceSample> samples;
  if (split == "test") {
    samples = data.test;
  } else if (split == "labeled") {
    samples = data.labeled;
  } else if (split == "unlabeled") {
    const auto truth = sealed::read_truth(c.data);
    samples = data.unlabeled;
    for (auto& s : samples) s.label = truth.at(s.id);
  } else {
    throw ConfigError("--split: expected test, labeled or unlabeled");
  }
  std::vector<const UtteranceSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const MetricsReport r = evaluate(*m.model, prepare(ptrs, m.norm, m.dims, m.model->modalities(), true));
  print_metrics(split, r);
  for (const auto& row : r.confusion) std::cout << json(row).dump() << "\n";
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_confusion_csv(fs::path(a.out) / "confusion.csv", r);
    write_metrics_csv(fs::path(a.out) / "metrics.csv", {{split, r}});
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised multi-modal emotion recognition with cross-modal distribution matching"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  CommonArgs args;
  auto* gen = app.add_subcommand("gen-synth", "generate the synthetic corpus");
  auto* tr = app.add_subcommand("train", "train one model");
  auto* kf = app.add_subcommand("kfold", "k-fold model selection");
  auto* ab = app.add_subcommand("ablate", "component ablation grid");
  auto* sw = app.add_subcommand("sweep", "unlabeled-quantity sweep");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  for (auto* cmd : {gen, tr, kf, ab, sw, ev}) add_common(cmd, args);
  std::string quota_list, sign_flip, checkpoint, split = "test";
  std::size_t gc_seeds = 20;
  sw->add_option("--quota-list", quota_list, "comma-separated unlabeled quotas");
  gc->add_option("--seeds", gc_seeds, "random cases per op");
  gc->add_option("--sign-flip", sign_flip, "negate one op's backward (negative control)");
  ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  ev->add_option("--split", split, "test, labeled or unlabeled");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("[%l] %v");

  try {
    if (*gen) return cmd_gen_synth(args);
    if (*tr) return cmd_train(args);
    if (*kf) return cmd_kfold(args);
    if (*ab) return cmd_ablate(args);
    if (*sw) return cmd_sweep(args, quota_list);
    if (*gc) return cmd_gradcheck(gc_seeds, sign_flip);
    if (*ev) return cmd_eval(args, checkpoint, split);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kConfigFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeFailure;
  }
  return kOk;
}

// tests/test_training.cpp

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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "xmodal/error.hpp"
#include "xmodal/run_config.hpp"
#include "xmodal/training.hpp"

using namespace xmodal;
namespace fs = std::filesystem;

namespace {

const Dataset& small_dataset() {
  static const Dataset ds = [] {
    const fs::path dir = fs::temp_directory_path() / "xmodal_test_training_data";
    fs::remove_all(dir);
    SynthConfig c;
    c.labeled = 100;
    c.test = 100;
    c.unlabeled = 200;
    synth_generate(c, dir);
    return load_dataset(dir);
  }();
  return ds;
}

const Dataset& separable_dataset() {
  static const Dataset ds = [] {
    const fs::path dir = fs::temp_directory_path() / "xmodal_test_training_separable";
    fs::remove_all(dir);
    SynthConfig c;
    c.classes = 2;
    c.noise = 0.1;
    c.prototype_scale = 2.0;
    c.labeled = 100;
    c.test = 100;
    c.unlabeled = 40;
    synth_generate(c, dir);
    return load_dataset(dir);
  }();
  return ds;
}

TrainConfig quick(TrainMode mode = TrainMode::kFully, std::size_t epochs = 3) {
  TrainConfig c;
  c.mode = mode;
  c.batch_size = 16;
  c.matching.group_size = 8;
  c.max_epochs = epochs;
  return c;
}

void check_consistent(const MetricsReport& m) {
  const std::size_t k = m.confusion.size();
  double n = 0;
  std::vector<double> row(k, 0), col(k, 0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      row[i] += static_cast<double>(m.confusion[i][j]);
      col[j] += static_cast<double>(m.confusion[i][j]);
      n += static_cast<double>(m.confusion[i][j]);
    }
  double wap = 0, wf1 = 0, ua = 0, present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(m.confusion[c][c]);
    const double p = col[c] > 0 ? tp / col[c] : 0, r = row[c] > 0 ? tp / row[c] : 0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0;
    wap += row[c] / n * p;
    wf1 += row[c] / n * f;
    if (row[c] > 0) ua += r, ++present;
  }
  CHECK(std::abs(m.wap - wap) <= 1e-12);
  CHECK(std::abs(m.weighted_f1 - wf1) <= 1e-12);
  CHECK(std::abs(m.ua - ua / present) <= 1e-12);
}

bool same_losses(const RunRecord& a, const RunRecord& b) {
  if (a.epochs.size() != b.epochs.size()) return false;
  for (std::size_t e = 0; e < a.epochs.size(); ++e)
    if (breakdown_json(a.epochs[e].loss) != breakdown_json(b.epochs[e].loss)) return false;
  return true;
}

}  // namespace

TEST_CASE("metrics from a fixed confusion matrix") {
  const MetricsReport m = metrics_from_confusion({{2, 0}, {1, 1}});
  CHECK(m.ua == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(m.wap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(m.weighted_f1 == doctest::Approx(0.5 * 0.8 + 0.5 * 2.0 / 3.0).epsilon(1e-12));
  CHECK(m.precision[0] == doctest::Approx(2.0 / 3.0));
  CHECK(m.recall[1] == 0.5);
  check_consistent(m);

  const MetricsReport perfect = metrics_from_confusion({{3, 0, 0}, {0, 2, 0}, {0, 0, 5}});
  CHECK(perfect.ua == 1.0);
  CHECK(perfect.wap == 1.0);
  CHECK(perfect.weighted_f1 == 1.0);

  const std::vector<int> truth{0, 0, 1, 1, 2, 2, 3, 3};
  const std::vector<int> one_class(8, 2);
  const MetricsReport flat = score(truth, one_class, 4);
  CHECK(flat.ua == 0.25);
  check_consistent(flat);
}

TEST_CASE("absent truth classes leave UA") {
  const MetricsReport m = metrics_from_confusion({{2, 1, 0}, {0, 0, 0}, {1, 0, 3}});
  CHECK(m.absent == std::vector<std::size_t>{1});
  CHECK(m.ua == doctest::Approx((2.0 / 3.0 + 0.75) / 2));
  check_consistent(m);
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t row = 0;
    for (std::size_t v : m.confusion[i]) row += v;
    CHECK(static_cast<double>(row) == m.support[i]);
  }
  CHECK_THROWS_AS(metrics_from_confusion({{0, 0}, {0, 0}}), ConfigError);
}

TEST_CASE("argmax ties go to the lowest class") {
  const Tensor p = Tensor::from({2, 3}, {0.4, 0.4, 0.2, 0.1, 0.45, 0.45});
  CHECK(predict(p) == std::vector<int>{0, 1});
}

TEST_CASE("least-squares slope") {
  const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  CHECK(ls_slope(x, y) == doctest::Approx(2.0));
  CHECK_THROWS_AS(ls_slope(std::vector<double>{1, 1}, std::vector<double>{0, 1}), ConfigError);
}

TEST_CASE("training is deterministic") {
  const Dataset& ds = small_dataset();
  const TrainConfig c = quick(TrainMode::kSemi);
  const RunRecord a = train(c, ds).record;
  const RunRecord b = train(c, ds).record;
  CHECK(same_losses(a, b));
  CHECK(metrics_json(*a.test) == metrics_json(*b.test));
  CHECK(a.best_epoch == b.best_epoch);
  TrainConfig other = c;
  other.seed = 2;
  CHECK_FALSE(same_losses(a, train(other, ds).record));
}

TEST_CASE("semi with omega = 0 follows the fully-supervised trajectory") {
  const Dataset& ds = small_dataset();
  TrainConfig fully = quick(TrainMode::kFully);
  TrainConfig semi = quick(TrainMode::kSemi);
  fully.weights.omega = semi.weights.omega = 0.0;
  const RunRecord a = train(fully, ds).record;
  const RunRecord b = train(semi, ds).record;
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].loss.l_s == b.epochs[e].loss.l_s);
    CHECK(a.epochs[e].loss.l_cls == b.epochs[e].loss.l_cls);
    CHECK(b.epochs[e].loss.l_u_rec > 0.0);
  }
  CHECK(metrics_json(*a.test) == metrics_json(*b.test));
}

TEST_CASE("classification loss falls on separable data without auxiliary terms") {
  TrainConfig c = quick(TrainMode::kFully, 20);
  c.weights = {0.0, 0.0, 0.0};
  c.lr = 3e-3;
  const RunRecord r = train(c, separable_dataset()).record;
  REQUIRE(r.epochs.size() >= 5);
  for (std::size_t e = 1; e < 5; ++e) CHECK(r.epochs[e].loss.l_cls < r.epochs[e - 1].loss.l_cls);
  double best = 0;
  for (const auto& e : r.epochs) best = std::max(best, e.validation.ua);
  CHECK(best >= 0.95);
  CHECK(r.best_validation_ua() == best);
}

TEST_CASE("early stopping and best-epoch selection") {
  TrainConfig c = quick(TrainMode::kFully, 40);
  c.patience = 2;
  const RunRecord r = train(c, small_dataset()).record;
  CHECK(r.epochs.size() < 40);
  CHECK(r.epochs.size() - r.best_epoch == 2);
  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    if (e + 1 < r.best_epoch) CHECK(r.epochs[e].validation.ua < r.best_validation_ua());
    CHECK(r.epochs[e].validation.ua <= r.best_validation_ua());
  }
}

TEST_CASE("training configuration errors") {
  const Dataset& ds = small_dataset();
  TrainConfig c = quick(TrainMode::kSemi);
  c.modalities = {true, false, false};
  CHECK_THROWS_AS(train(c, ds), ConfigError);
  c = quick();
  c.validation_fold = 5;
  CHECK_THROWS_AS(train(c, ds), ConfigError);
  c = quick(TrainMode::kSemi);
  c.unlabeled_quota = 201;
  CHECK_THROWS_AS(train(c, ds), ConfigError);
  c = quick();
  c.batch_size = 12;  // not a multiple of the group size
  CHECK_THROWS_AS(train(c, ds), ConfigError);
  c = quick();
  c.batch_size = 512;
  CHECK_THROWS_AS(train(c, ds), ConfigError);
}

TEST_CASE("divergence stops training with the last good parameters saved") {
  TrainConfig c = quick(TrainMode::kFully, 5);
  c.lr = 1e150;
  TrainOptions o;
  o.checkpoint = fs::temp_directory_path() / "xmodal_test_diverge.ckpt";
  fs::remove(*o.checkpoint);
  CHECK_THROWS_AS(train(c, small_dataset(), o), NumericError);
  CHECK(fs::exists(*o.checkpoint));
  const LoadedModel m = load_model(*o.checkpoint);
  for (const Parameter* p : m.model->params.all()) CHECK(p->value.all_finite());
}

TEST_CASE("checkpointed models predict identically") {
  const Dataset& ds = small_dataset();
  TrainOptions o;
  o.checkpoint = fs::temp_directory_path() / "xmodal_test_model.ckpt";
  const TrainResult r = train(quick(), ds, o);
  const LoadedModel m = load_model(*o.checkpoint);
  std::vector<const UtteranceSample*> test;
  for (const auto& s : ds.test) test.push_back(&s);
  const PreparedSet ps = prepare(test, m.norm, m.dims, m.model->modalities(), true);
  CHECK(metrics_json(evaluate(*m.model, ps)) == metrics_json(*r.record.test));
  fs::remove(*o.checkpoint);
}

TEST_CASE("k-fold selection") {
  const Dataset& ds = small_dataset();
  const TrainConfig c = quick(TrainMode::kFully, 2);
  const KFoldResult r = kfold_select(c, ds, 5);
  REQUIRE(r.folds.size() == 5);
  std::size_t argmax = 0;
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(r.folds[f].config.validation_fold == static_cast<int>(f));
    if (r.folds[f].best_validation_ua() > r.folds[argmax].best_validation_ua()) argmax = f;
    CHECK(r.folds[f].test.has_value() == (f == r.selected));
  }
  CHECK(r.selected == argmax);
  CHECK(metrics_json(*r.folds[r.selected].test) == metrics_json(r.test));
  CHECK_THROWS_AS(kfold_select(c, ds, 6), ConfigError);

  const KFoldResult parallel = kfold_select(c, ds, 5, {}, 3);
  for (std::size_t f = 0; f < 5; ++f) CHECK(same_losses(parallel.folds[f], r.folds[f]));
}

TEST_CASE("ablation grid") {
  const auto grid = ablation_grid();
  REQUIRE(grid.size() == 6);
  TrainConfig base;
  const TrainConfig vanilla = ablation_config(base, grid[0]);
  CHECK(vanilla.mode == TrainMode::kFully);
  CHECK(vanilla.weights.alpha == 0.0);
  CHECK(vanilla.weights.beta == 0.0);
  CHECK(vanilla.weights.omega == 0.0);
  std::size_t semi = 0;
  for (const auto& cell : grid) {
    const TrainConfig c = ablation_config(base, cell);
    CHECK(c.weights.alpha == (cell.reconstruction ? base.weights.alpha : 0.0));
    CHECK(c.weights.beta == (cell.matching ? base.weights.beta : 0.0));
    if (cell.setting == "semi") {
      ++semi;
      CHECK(cell.matching);
      CHECK(c.weights.omega == base.weights.omega);
    }
  }
  CHECK(semi == 2);
}

TEST_CASE("unlabeled sweep") {
  const Dataset& ds = small_dataset();
  const TrainConfig base = quick(TrainMode::kSemi, 2);
  const std::uint64_t seeds[] = {1};
  const std::size_t quotas[] = {0, 50};
  const auto points = sweep_unlabeled(base, ds, quotas, seeds);
  REQUIRE(points.size() == 2);
  CHECK(points[1].runs[0].unlabeled_used == 50);

  TrainConfig fully = base;
  fully.mode = TrainMode::kFully;
  const RunRecord direct = train(fully, ds).record;
  CHECK(same_losses(points[0].runs[0], direct));
  CHECK(points[0].mean_ua == direct.test->ua);

  TrainConfig whole = sweep_config(base, ds.unlabeled.size());
  CHECK(whole.mode == TrainMode::kSemi);
  CHECK(same_losses(train(whole, ds).record, train(base, ds).record));

  const std::size_t too_many[] = {0, 201};
  const std::size_t unsorted[] = {50, 0};
  CHECK_THROWS_AS(sweep_unlabeled(base, ds, too_many, seeds), ConfigError);
  CHECK_THROWS_AS(sweep_unlabeled(base, ds, unsorted, seeds), ConfigError);
}

TEST_CASE("metrics stream carries no timing and repeats exactly") {
  const Dataset& ds = small_dataset();
  const fs::path p1 = fs::temp_directory_path() / "xmodal_test_stream1.jsonl";
  const fs::path p2 = fs::temp_directory_path() / "xmodal_test_stream2.jsonl";
  fs::remove(p1);
  fs::remove(p2);
  for (const auto& p : {p1, p2}) {
    MetricsWriter w(p);
    TrainOptions o;
    o.metrics = &w;
    train(quick(TrainMode::kSemi, 2), ds, o);
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string s1 = slurp(p1);
  CHECK(s1 == slurp(p2));
  CHECK(s1.find("wall") == std::string::npos);
  CHECK(std::count(s1.begin(), s1.end(), '\n') == 3);
}

TEST_CASE("run directories never collide") {
  const fs::path base = fs::temp_directory_path() / "xmodal_test_runs";
  fs::remove_all(base);
  const nlohmann::json cfg = TrainConfig{};
  const fs::path a = make_run_dir(base, "train", cfg);
  const fs::path b = make_run_dir(base, "train", cfg);
  CHECK(a != b);
  CHECK(b.filename().string() == a.filename().string() + "-1");
  CHECK(a.filename().string() == "train-" + config_hash(cfg));
  fs::remove_all(base);
}

TEST_CASE("configuration files") {
  TrainConfig c;
  c.mode = TrainMode::kSemi;
  c.weights.beta = 0.5;
  c.dae.visual.convs[0].stride = 1;
  const nlohmann::json j = c;
  TrainConfig back;
  from_json(j, back);
  CHECK(nlohmann::json(back) == j);

  TrainConfig partial;
  from_json(nlohmann::json{{"weights", {{"omega", 0.7}}}}, partial);
  CHECK(partial.weights.omega == 0.7);
  CHECK(partial.weights.alpha == 0.2);
  CHECK(partial.batch_size == 128);
  CHECK(partial.lr == 1e-3);

  CHECK_THROWS_AS(from_json(nlohmann::json{{"wieghts", 1}}, partial), ConfigError);
  CHECK_THROWS_AS(from_json(nlohmann::json{{"weights", {{"gamma", 1}}}}, partial), ConfigError);
  CHECK_THROWS_AS(from_json(nlohmann::json{{"mode", "weak"}}, partial), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"trian", {}}}), ConfigError);

  const RunConfig rc = parse_run_config(nlohmann::json{{"train", {{"seed", 9}}}, {"quotas", {0, 10}}});
  CHECK(rc.train.seed == 9);
  CHECK(rc.quotas == std::vector<std::size_t>{0, 10});
  CHECK(rc.seeds.size() == 5);
}

TEST_CASE("the checked-in standard config matches the built-in benchmark") {
  const RunConfig file = load_run_config(fs::path(XMODAL_SOURCE_DIR) / "configs" / "standard.json");
  CHECK(nlohmann::json(file) == nlohmann::json(standard_benchmark()));
  const RunConfig bench = standard_benchmark();
  CHECK(bench.synth.classes == 4);
  CHECK(bench.synth.labeled == 400);
  CHECK(bench.synth.unlabeled == 2000);
  CHECK(nlohmann::json(bench.train.dae) == nlohmann::json(DAEConfig::toy()));
  CHECK(bench.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
  CHECK(bench.quotas == std::vector<std::size_t>{0, 250, 500, 1000, 2000});
}

// src/training.cpp

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

#include "xmodal/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

#include "xmodal/error.hpp"

namespace xmodal {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

MetricsReport metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
  const std::size_t k = confusion.size();
  for (const auto& row : confusion)
    if (row.size() != k) throw ShapeError("metrics: confusion matrix must be square");
  MetricsReport m;
  m.precision.assign(k, 0.0);
  m.recall.assign(k, 0.0);
  m.f1.assign(k, 0.0);
  m.support.assign(k, 0.0);
  std::vector<double> predicted(k, 0.0);
  double total = 0, correct = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double v = static_cast<double>(confusion[i][j]);
      m.support[i] += v;
      predicted[j] += v;
      total += v;
      if (i == j) correct += v;
    }
  if (total == 0) throw ConfigError("metrics: empty confusion matrix");
  double ua_sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(confusion[c][c]);
    if (predicted[c] > 0) m.precision[c] = tp / predicted[c];
    if (m.support[c] > 0) {
      m.recall[c] = tp / m.support[c];
      ua_sum += m.recall[c];
    } else {
      m.absent.push_back(c);
    }
    const double pr = m.precision[c] + m.recall[c];
    if (pr > 0) m.f1[c] = 2 * m.precision[c] * m.recall[c] / pr;
    m.wap += m.support[c] / total * m.precision[c];
    m.weighted_f1 += m.support[c] / total * m.f1[c];
  }
  if (!m.absent.empty())
    spdlog::warn("metrics: {} class(es) absent from the truth are left out of UA", m.absent.size());
  m.ua = ua_sum / static_cast<double>(k - m.absent.size());
  m.accuracy = correct / total;
  m.confusion = std::move(confusion);
  return m;
}

std::vector<int> predict(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("predict: expected [N,K], got " + shape_str(probs.shape()));
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = probs.ptr() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

MetricsReport score(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
  if (truth.size() != predicted.size()) throw ShapeError("score: truth and prediction lengths differ");
  std::vector<std::vector<std::size_t>> confusion(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes || predicted[i] < 0 ||
        static_cast<std::size_t>(predicted[i]) >= classes)
      throw ConfigError("score: class index out of range");
    ++confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return metrics_from_confusion(std::move(confusion));
}

namespace {

std::vector<std::size_t> iota_rows(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return rows;
}

}  // namespace

Tensor predict_probs(const Model& model, const PreparedSet& set, std::size_t chunk) {
  Tensor out({set.size(), model.classes()});
  for (std::size_t begin = 0; begin < set.size(); begin += chunk) {
    const auto rows = iota_rows(begin, std::min(set.size(), begin + chunk));
    const Tensor p = classify(model, gather(set, rows, false));
    std::copy(p.data().begin(), p.data().end(), out.ptr() + begin * model.classes());
  }
  return out;
}

MetricsReport evaluate(const Model& model, const PreparedSet& set) {
  if (set.labels.size() != set.size()) throw ConfigError("evaluate: samples must be labeled");
  return score(set.labels, predict(predict_probs(model, set)), model.classes());
}

double mean_latent_norm(const Model& model, const PreparedSet& set) {
  double total = 0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < set.size(); begin += 256) {
    Graph g;
    const Encoded enc = encode_batch(g, model, gather(set, iota_rows(begin, std::min(set.size(), begin + 256)), false));
    for (const auto* z : {&enc.latents.acoustic, &enc.latents.visual, &enc.latents.lexical}) {
      if (!*z) continue;
      const Tensor& v = (*z)->value();
      const std::size_t rows = v.dim(0), d = v.dim(1);
      for (std::size_t i = 0; i < rows; ++i) {
        double sq = 0;
        for (std::size_t j = 0; j < d; ++j) sq += v[i * d + j] * v[i * d + j];
        total += std::sqrt(sq);
        ++count;
      }
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

json metrics_json(const MetricsReport& m) {
  return {{"wap", m.wap}, {"ua", m.ua}, {"weighted_f1", m.weighted_f1}, {"accuracy", m.accuracy},
          {"confusion", m.confusion}};
}

json breakdown_json(const LossBreakdown& b) {
  return {{"l_cls", b.l_cls},       {"l_rec", b.l_rec},       {"l_pair", b.l_pair},
          {"l_unpair", b.l_unpair}, {"l_u_rec", b.l_u_rec},   {"l_u_pair", b.l_u_pair},
          {"l_u_unpair", b.l_u_unpair}, {"l_s", b.l_s},       {"l_u", b.l_u},
          {"l_semi", b.l_semi},     {"unpair_raw", b.unpair_raw}, {"u_unpair_raw", b.u_unpair_raw}};
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path)
    : out_(std::make_unique<std::ofstream>(path, std::ios::app)) {
  if (!*out_) throw IoError("cannot open metrics stream " + path.string());
}

void MetricsWriter::write(const json& record) {
  std::lock_guard lock(mutex_);
  if (!out_) return;
  *out_ << record.dump() << "\n";
  out_->flush();
}

void MetricsWriter::epoch(const RunRecord& run, const EpochRecord& e) {
  write({{"run", run.run_id}, {"epoch", e.epoch}, {"loss", breakdown_json(e.loss)},
         {"validation", metrics_json(e.validation)}});
}

namespace {

void write_run_summary(MetricsWriter* w, const RunRecord& r) {
  if (!w) return;
  json j = {{"run", r.run_id}, {"best_epoch", r.best_epoch}, {"epochs", r.epochs.size()},
            {"unlabeled_used", r.unlabeled_used}};
  if (r.test) j["test"] = metrics_json(*r.test);
  w->write(j);
}

void write_run(MetricsWriter* w, const RunRecord& r) {
  if (!w) return;
  for (const auto& e : r.epochs) w->epoch(r, e);
  write_run_summary(w, r);
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double scale) {
  acc.l_cls += scale * b.l_cls;
  acc.l_rec += scale * b.l_rec;
  acc.l_pair += scale * b.l_pair;
  acc.l_unpair += scale * b.l_unpair;
  acc.l_u_rec += scale * b.l_u_rec;
  acc.l_u_pair += scale * b.l_u_pair;
  acc.l_u_unpair += scale * b.l_u_unpair;
  acc.l_s += scale * b.l_s;
  acc.l_u += scale * b.l_u;
  acc.l_semi += scale * b.l_semi;
  acc.unpair_raw += scale * b.unpair_raw;
  acc.u_unpair_raw += scale * b.u_unpair_raw;
}

std::vector<Tensor> snapshot(const ParameterSet& ps) {
  std::vector<Tensor> out;
  for (const Parameter* p : ps.all()) out.push_back(p->value);
  return out;
}

void restore(ParameterSet& ps, const std::vector<Tensor>& values) {
  auto all = ps.all();
  for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = values[i];
}

std::vector<const UtteranceSample*> pointers(const std::vector<UtteranceSample>& v) {
  std::vector<const UtteranceSample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

// Cycles through shuffled rows, reshuffling whenever fewer than `batch`
// remain.
class BatchCursor {
 public:
  BatchCursor(std::size_t rows, Rng rng) : rows_(rows), rng_(std::move(rng)) {}
  std::vector<std::size_t> next(std::size_t batch) {
    if (order_.size() - pos_ < batch) {
      order_ = permutation(rng_, rows_);
      pos_ = 0;
    }
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch));
    pos_ += batch;
    return out;
  }

 private:
  std::size_t rows_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// Unlabeled rows used by a semi run: a seeded prefix of the pool, optionally
// rebalanced on pseudo labels from a vanilla model.
std::vector<const UtteranceSample*> select_unlabeled(const TrainConfig& config, const Dataset& data) {
  auto pool = pointers(data.unlabeled);
  if (config.unlabeled_quota > pool.size())
    throw ConfigError("train: unlabeled quota " + std::to_string(config.unlabeled_quota) +
                      " exceeds the pool of " + std::to_string(pool.size()));
  if (config.unlabeled_quota > 0 && config.unlabeled_quota < pool.size()) {
    Rng rng = make_rng(config.seed, "quota");
    const auto perm = permutation(rng, pool.size());
    std::vector<const UtteranceSample*> chosen;
    for (std::size_t i = 0; i < config.unlabeled_quota; ++i) chosen.push_back(pool[perm[i]]);
    pool = std::move(chosen);
  }
  if (config.balance_cap == 0) return pool;

  TrainConfig vanilla = config;
  vanilla.mode = TrainMode::kFully;
  vanilla.weights = {0.0, 0.0, 0.0};
  vanilla.balance_cap = 0;
  TrainOptions quiet;
  quiet.evaluate_test = false;
  quiet.run_id = "vanilla";
  const TrainResult v = train(vanilla, data, quiet);
  const PreparedSet ps = prepare(pool, v.norm, data.manifest.dims, config.modalities, false);
  const auto pseudo = predict(predict_probs(*v.model, ps));
  Rng rng = make_rng(config.seed, "balance");
  std::vector<const UtteranceSample*> balanced;
  for (std::size_t i : balance_unlabeled(pseudo, data.manifest.classes, config.balance_cap, rng))
    balanced.push_back(pool[i]);
  return balanced;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const DatasetManifest& manifest = data.manifest;
  if (static_cast<std::size_t>(config.validation_fold) >= manifest.folds)
    throw ConfigError("train: validation fold " + std::to_string(config.validation_fold) +
                      " but the manifest has " + std::to_string(manifest.folds) + " folds");
  if (config.mode == TrainMode::kFully && config.weights.omega != 0)
    spdlog::debug("train: omega is ignored in fully-supervised mode");

  std::vector<int> train_folds;
  for (int f = 0; f < static_cast<int>(manifest.folds); ++f)
    if (f != config.validation_fold) train_folds.push_back(f);
  const int val_fold[] = {config.validation_fold};
  const auto train_samples = data.folds(train_folds);
  const auto val_samples = data.folds(val_fold);
  if (val_samples.empty()) throw ConfigError("train: validation fold is empty");

  TrainResult result;
  std::string fitted_on = "labeled folds";
  for (int f : train_folds) fitted_on += " " + std::to_string(f);
  result.norm = z_normalize_fit(train_samples, fitted_on);
  const FeatureDims& dims = manifest.dims;
  const PreparedSet train_set = prepare(train_samples, result.norm, dims, config.modalities, true);
  const PreparedSet val_set = prepare(val_samples, result.norm, dims, config.modalities, true);
  if (train_set.size() < config.batch_size)
    throw ConfigError("train: " + std::to_string(train_set.size()) +
                      " training samples cannot fill a batch of " + std::to_string(config.batch_size));

  PreparedSet unl_set;
  const bool semi = config.mode == TrainMode::kSemi;
  if (semi) {
    if (data.unlabeled.empty()) throw ConfigError("train: semi mode needs an unlabeled pool");
    unl_set = prepare(select_unlabeled(config, data), result.norm, dims, config.modalities, false);
    if (unl_set.size() < config.batch_size)
      throw ConfigError("train: " + std::to_string(unl_set.size()) +
                        " unlabeled samples cannot fill a batch of " + std::to_string(config.batch_size));
  }

  result.model = std::make_unique<Model>(fit_dae_config(config.dae, dims), config.modalities,
                                         manifest.classes, config.seed);
  Model& model = *result.model;
  RunRecord& rec = result.record;
  rec.run_id = options.run_id;
  rec.config = config;
  rec.unlabeled_used = unl_set.size();

  ObjectiveConfig obj;
  obj.weights = config.weights;
  obj.kernel = config.kernel;
  obj.matching = config.matching;
  obj.unpaired = config.unpaired;
  Rng batch_rng = make_rng(config.seed, "batches/labeled");
  BatchCursor unl_cursor(unl_set.size(), make_rng(config.seed, "batches/unlabeled"));
  Rng derange_l = make_rng(config.seed, "derange/labeled");
  Rng derange_u = make_rng(config.seed, "derange/unlabeled");
  Adam adam({.lr = config.lr});
  const auto params = model.params.all();
  const std::size_t steps = train_set.size() / config.batch_size;

  auto last_good = snapshot(model.params);
  auto best = last_good;
  double best_ua = -1;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = permutation(batch_rng, train_set.size());
    EpochRecord er;
    er.epoch = epoch;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::span<const std::size_t> rows(order.data() + s * config.batch_size, config.batch_size);
      try {
        model.params.zero_grad();
        Graph g;
        const Batch lb = gather(train_set, rows, true);
        Objective o;
        if (semi) {
          const auto urows = unl_cursor.next(config.batch_size);
          const Batch ub = gather(unl_set, urows, false);
          o = semi_loss(g, model, lb, &ub, obj, derange_l, derange_u);
        } else {
          o = supervised_loss(g, model, lb, obj, derange_l);
        }
        if (!std::isfinite(o.breakdown.l_semi))
          throw NumericError("non-finite loss " + std::to_string(o.breakdown.l_semi));
        g.backward(o.total);
        for (const Parameter* p : params)
          if (!p->grad.all_finite()) throw NumericError("non-finite gradient in " + p->name);
        adam.step(params);
        accumulate(er.loss, o.breakdown, 1.0 / static_cast<double>(steps));
      } catch (const NumericError& e) {
        restore(model.params, last_good);
        if (options.checkpoint) save_model(*options.checkpoint, model, result.norm, dims);
        throw NumericError("train: diverged at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(s + 1) + ": " + e.what());
      }
    }
    er.validation = evaluate(model, val_set);
    last_good = snapshot(model.params);
    if (er.validation.ua > best_ua) {
      best_ua = er.validation.ua;
      rec.best_epoch = epoch;
      best = last_good;
    }
    rec.epochs.push_back(er);
    if (options.metrics) options.metrics->epoch(rec, rec.epochs.back());
    spdlog::debug("{} epoch {} l_s {:.4f} val UA {:.4f}", rec.run_id, epoch, er.loss.l_s, er.validation.ua);
    if (epoch - rec.best_epoch >= config.patience) break;
  }
  if (config.restore_best) restore(model.params, best);
  if (options.evaluate_test && !data.test.empty()) {
    const auto test_samples = pointers(data.test);
    rec.test = evaluate(model, prepare(test_samples, result.norm, dims, config.modalities, true));
  }
  if (options.checkpoint) save_model(*options.checkpoint, model, result.norm, dims);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_run_summary(options.metrics, rec);
  return result;
}

void run_parallel(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < std::min(jobs, n); ++w)
    workers.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

KFoldResult kfold_select(const TrainConfig& config, const Dataset& data, std::size_t k,
                         const TrainOptions& options, std::size_t jobs) {
  if (k < 2) throw ConfigError("kfold: k must be at least 2");
  if (data.manifest.folds < k)
    throw ConfigError("kfold: manifest has " + std::to_string(data.manifest.folds) + " folds, fewer than k = " +
                      std::to_string(k));
  std::vector<TrainResult> runs(k);
  run_parallel(k, jobs, [&](std::size_t f) {
    TrainConfig c = config;
    c.validation_fold = static_cast<int>(f);
    TrainOptions o;
    o.evaluate_test = false;
    o.run_id = options.run_id + "/fold" + std::to_string(f);
    runs[f] = train(c, data, o);
  });
  KFoldResult out;
  double best = -1;
  for (std::size_t f = 0; f < k; ++f) {
    out.folds.push_back(runs[f].record);
    if (runs[f].record.best_validation_ua() > best) {
      best = runs[f].record.best_validation_ua();
      out.selected = f;
    }
  }
  TrainResult& chosen = runs[out.selected];
  out.test = evaluate(*chosen.model,
                      prepare(pointers(data.test), chosen.norm, data.manifest.dims, config.modalities, true));
  out.folds[out.selected].test = out.test;
  out.model = std::move(chosen.model);
  out.norm = std::move(chosen.norm);
  for (const auto& r : out.folds) write_run(options.metrics, r);
  if (options.checkpoint) save_model(*options.checkpoint, *out.model, out.norm, data.manifest.dims);
  return out;
}

std::string AblationCell::name() const {
  std::string what = reconstruction && matching ? "rec+mmd"
                     : reconstruction           ? "rec"
                     : matching                 ? "mmd"
                                                : "vanilla";
  return setting + "/" + what;
}

std::vector<AblationCell> ablation_grid() {
  return {{"fully", false, false}, {"fully", false, true}, {"fully", true, false},
          {"fully", true, true},   {"semi", false, true},  {"semi", true, true}};
}

TrainConfig ablation_config(const TrainConfig& base, const AblationCell& cell) {
  TrainConfig c = base;
  c.mode = parse_mode(cell.setting);
  c.weights.alpha = cell.reconstruction ? base.weights.alpha : 0.0;
  c.weights.beta = cell.matching ? base.weights.beta : 0.0;
  c.weights.omega = c.mode == TrainMode::kSemi ? base.weights.omega : 0.0;
  return c;
}

TrainConfig sweep_config(const TrainConfig& base, std::size_t quota) {
  TrainConfig c = base;
  if (quota == 0) {
    c.mode = TrainMode::kFully;
    c.weights.omega = 0;
  } else {
    c.mode = TrainMode::kSemi;
    c.unlabeled_quota = quota;
  }
  return c;
}

namespace {

template <class Row>
void finish_means(Row& row) {
  double ua = 0, wap = 0;
  for (const auto& r : row.runs) {
    ua += r.test->ua;
    wap += r.test->wap;
  }
  row.mean_ua = ua / static_cast<double>(row.runs.size());
  row.mean_wap = wap / static_cast<double>(row.runs.size());
}

}  // namespace

std::vector<AblationRow> ablate(const TrainConfig& base, const Dataset& data,
                                std::span<const std::uint64_t> seeds, const TrainOptions& options,
                                std::size_t jobs) {
  if (seeds.empty()) throw ConfigError("ablate: no seeds");
  const auto grid = ablation_grid();
  std::vector<AblationRow> rows(grid.size());
  std::vector<RunRecord> flat(grid.size() * seeds.size());
  run_parallel(flat.size(), jobs, [&](std::size_t i) {
    const auto& cell = grid[i / seeds.size()];
    TrainConfig c = ablation_config(base, cell);
    c.seed = seeds[i % seeds.size()];
    TrainOptions o;
    o.run_id = options.run_id + "/" + cell.name() + "/seed" + std::to_string(c.seed);
    flat[i] = train(c, data, o).record;
  });
  for (std::size_t r = 0; r < grid.size(); ++r) {
    rows[r].cell = grid[r];
    for (std::size_t s = 0; s < seeds.size(); ++s) rows[r].runs.push_back(flat[r * seeds.size() + s]);
    finish_means(rows[r]);
  }
  for (const auto& r : flat) write_run(options.metrics, r);
  return rows;
}

std::vector<SweepPoint> sweep_unlabeled(const TrainConfig& base, const Dataset& data,
                                        std::span<const std::size_t> quotas,
                                        std::span<const std::uint64_t> seeds, const TrainOptions& options,
                                        std::size_t jobs) {
  if (quotas.empty() || seeds.empty()) throw ConfigError("sweep: need quotas and seeds");
  for (std::size_t i = 1; i < quotas.size(); ++i)
    if (quotas[i] <= quotas[i - 1]) throw ConfigError("sweep: quotas must be strictly ascending");
  if (quotas.back() > data.unlabeled.size())
    throw ConfigError("sweep: quota " + std::to_string(quotas.back()) + " exceeds the unlabeled pool of " +
                      std::to_string(data.unlabeled.size()));
  std::vector<RunRecord> flat(quotas.size() * seeds.size());
  run_parallel(flat.size(), jobs, [&](std::size_t i) {
    const std::size_t q = quotas[i / seeds.size()];
    TrainConfig c = sweep_config(base, q);
    c.seed = seeds[i % seeds.size()];
    TrainOptions o;
    o.run_id = options.run_id + "/q" + std::to_string(q) + "/seed" + std::to_string(c.seed);
    flat[i] = train(c, data, o).record;
  });
  std::vector<SweepPoint> points(quotas.size());
  for (std::size_t p = 0; p < quotas.size(); ++p) {
    points[p].quota = quotas[p];
    for (std::size_t s = 0; s < seeds.size(); ++s) points[p].runs.push_back(flat[p * seeds.size() + s]);
    finish_means(points[p]);
  }
  for (const auto& r : flat) write_run(options.metrics, r);
  return points;
}

double ls_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("ls_slope: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0) throw ConfigError("ls_slope: x values are all equal");
  return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::ofstream open_report(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  return out;
}

}  // namespace

void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& m) {
  auto out = open_report(path);
  out << "true\\pred";
  for (std::size_t j = 0; j < m.confusion.size(); ++j) out << "," << j;
  out << "\n";
  for (std::size_t i = 0; i < m.confusion.size(); ++i) {
    out << i;
    for (std::size_t v : m.confusion[i]) out << "," << v;
    out << "\n";
  }
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  auto out = open_report(path);
  out << "name,wap,ua,weighted_f1,accuracy\n";
  for (const auto& [name, m] : rows)
    out << name << "," << m.wap << "," << m.ua << "," << m.weighted_f1 << "," << m.accuracy << "\n";
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  auto out = open_report(path);
  out << "setting,reconstruction,mmd,seeds,mean_wap,mean_ua\n";
  for (const auto& r : rows)
    out << r.cell.setting << "," << (r.cell.reconstruction ? "on" : "off") << ","
        << (r.cell.matching ? "on" : "off") << "," << r.runs.size() << "," << r.mean_wap << "," << r.mean_ua
        << "\n";
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points) {
  auto out = open_report(path);
  out << "quota,seeds,mean_wap,mean_ua\n";
  for (const auto& p : points)
    out << p.quota << "," << p.runs.size() << "," << p.mean_wap << "," << p.mean_ua << "\n";
}

}  // namespace xmodal

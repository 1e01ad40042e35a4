// src/data.cpp

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

#include "xmodal/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "xmodal/error.hpp"

namespace xmodal {

using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kLabeled: return "labeled";
    case Split::kTest: return "test";
    case Split::kUnlabeled: return "unlabeled";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "labeled") return Split::kLabeled;
  if (s == "test") return Split::kTest;
  if (s == "unlabeled") return Split::kUnlabeled;
  throw IoError("manifest: unknown split '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Normalisation and shaping

namespace {

struct Moments {
  std::vector<double> sum, sq;
  std::size_t count = 0;
  void add_rows(const Tensor& t) {
    const std::size_t f = t.shape().back(), rows = t.size() / f;
    if (sum.empty()) sum.assign(f, 0.0), sq.assign(f, 0.0);
    if (sum.size() != f) throw ShapeError("z_normalize_fit: inconsistent feature dimension");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < f; ++j) sum[j] += t[r * f + j];
    count += rows;
  }
  void add_sq(const Tensor& t, const std::vector<double>& mean) {
    const std::size_t f = mean.size(), rows = t.size() / f;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < f; ++j) {
        const double d = t[r * f + j] - mean[j];
        sq[j] += d * d;
      }
  }
};

template <class Get>
void fit_modality(std::span<const UtteranceSample* const> train, Get get,
                  std::optional<Tensor>& mean_out, std::optional<Tensor>& std_out) {
  Moments m;
  for (const auto* s : train)
    if (const auto& t = get(*s)) m.add_rows(*t);
  if (m.count == 0) return;
  std::vector<double> mean(m.sum.size());
  for (std::size_t j = 0; j < mean.size(); ++j) mean[j] = m.sum[j] / static_cast<double>(m.count);
  for (const auto* s : train)
    if (const auto& t = get(*s)) m.add_sq(*t, mean);
  Tensor mt({mean.size()}), st({mean.size()});
  for (std::size_t j = 0; j < mean.size(); ++j) {
    mt[j] = mean[j];
    st[j] = std::max(std::sqrt(m.sq[j] / static_cast<double>(m.count)), kStdFloor);
  }
  mean_out = std::move(mt);
  std_out = std::move(st);
}

Tensor normalize_rows(const Tensor& t, const Tensor& mean, const Tensor& sd) {
  const std::size_t f = mean.size();
  if (t.shape().back() != f)
    throw ShapeError("z_normalize_apply: feature dimension " + std::to_string(t.shape().back()) +
                     ", statistics have " + std::to_string(f));
  Tensor out = t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (t[i] - mean[i % f]) / sd[i % f];
  return out;
}

}  // namespace

NormStats z_normalize_fit(std::span<const UtteranceSample* const> train, std::string fitted_on) {
  if (train.size() < 2)
    throw ConfigError("z_normalize_fit: need at least 2 training samples, got " +
                      std::to_string(train.size()));
  NormStats st;
  st.fitted_on = std::move(fitted_on);
  fit_modality(train, [](const UtteranceSample& s) -> const auto& { return s.acoustic; },
               st.acoustic_mean, st.acoustic_std);
  fit_modality(train, [](const UtteranceSample& s) -> const auto& { return s.visual; },
               st.visual_mean, st.visual_std);
  fit_modality(train, [](const UtteranceSample& s) -> const auto& { return s.lexical; },
               st.lexical_mean, st.lexical_std);
  return st;
}

UtteranceSample z_normalize_apply(const UtteranceSample& s, const NormStats& stats) {
  UtteranceSample out = s;
  auto apply = [](std::optional<Tensor>& t, const std::optional<Tensor>& mean,
                  const std::optional<Tensor>& sd) {
    if (!t) return;
    if (!mean) throw ConfigError("z_normalize_apply: no statistics for a present modality");
    t = normalize_rows(*t, *mean, *sd);
  };
  apply(out.acoustic, stats.acoustic_mean, stats.acoustic_std);
  apply(out.visual, stats.visual_mean, stats.visual_std);
  apply(out.lexical, stats.lexical_mean, stats.lexical_std);
  return out;
}

Tensor pad_or_truncate(const Tensor& seq, std::size_t target_steps) {
  if (seq.rank() != 2) throw ShapeError("pad_or_truncate: expected [TxF], got " + shape_str(seq.shape()));
  if (target_steps == 0) throw ConfigError("pad_or_truncate: target length must be positive");
  const std::size_t f = seq.dim(1), keep = std::min(seq.dim(0), target_steps);
  Tensor out({target_steps, f});
  std::copy_n(seq.ptr(), keep * f, out.ptr());
  return out;
}

double crop_width_from_labeled(std::span<const double> durations, double percentile) {
  if (durations.empty()) throw ConfigError("crop_width_from_labeled: no durations");
  if (!(percentile > 0.0 && percentile < 100.0))
    throw ConfigError("crop_width_from_labeled: percentile must lie in (0, 100)");
  std::vector<double> d(durations.begin(), durations.end());
  std::sort(d.begin(), d.end());
  const double pos = percentile / 100.0 * static_cast<double>(d.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return d[lo] + frac * (d[hi] - d[lo]);
}

std::vector<std::size_t> balance_unlabeled(std::span<const int> pseudo_labels, std::size_t classes,
                                           std::size_t cap, Rng& rng) {
  if (pseudo_labels.empty()) throw ConfigError("balance_unlabeled: empty pool");
  if (cap == 0) throw ConfigError("balance_unlabeled: cap must be positive");
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < pseudo_labels.size(); ++i) {
    const int c = pseudo_labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= classes)
      throw ConfigError("balance_unlabeled: pseudo label " + std::to_string(c) + " out of range");
    members[static_cast<std::size_t>(c)].push_back(i);
  }
  std::string empty;
  for (std::size_t c = 0; c < classes; ++c)
    if (members[c].empty()) empty += (empty.empty() ? "" : ", ") + std::to_string(c);
  if (!empty.empty()) throw ConfigError("balance_unlabeled: no pool members in class(es) " + empty);

  std::vector<std::size_t> out;
  out.reserve(cap * classes);
  for (const auto& m : members) {
    if (m.size() >= cap) {
      const auto perm = permutation(rng, m.size());
      for (std::size_t i = 0; i < cap; ++i) out.push_back(m[perm[i]]);
    } else {
      out.insert(out.end(), m.begin(), m.end());
      for (std::size_t i = m.size(); i < cap; ++i) out.push_back(m[uniform_index(rng, m.size())]);
    }
  }
  const auto order = permutation(rng, out.size());
  std::vector<std::size_t> shuffled(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) shuffled[i] = out[order[i]];
  return shuffled;
}

// ---------------------------------------------------------------------------
// Manifest and feature files

namespace {

constexpr const char* kModalityFiles[3] = {"acoustic.bin", "visual.bin", "lexical.bin"};

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}
constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

std::string encode_record(const Tensor& t) {
  std::string bytes;
  auto put = [&](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
  const std::int64_t rank = static_cast<std::int64_t>(t.rank());
  put(&rank, sizeof rank);
  for (std::size_t d : t.shape()) {
    const std::int64_t v = static_cast<std::int64_t>(d);
    put(&v, sizeof v);
  }
  for (double x : t.data()) {
    const float f = static_cast<float>(x);
    put(&f, sizeof f);
  }
  return bytes;
}

json tensor_json(const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); }

Tensor tensor_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.empty()) throw IoError("manifest: empty statistics vector");
  return Tensor({v.size()}, v);
}

// Reads one record at `offset`; `hash` is updated with its bytes.
Tensor read_record(std::ifstream& in, std::uint64_t file_size, std::int64_t offset,
                   std::string_view id, std::uint64_t& hash) {
  auto fail = [&](const std::string& why) {
    return IoError("sample " + std::string(id) + ": " + why);
  };
  if (offset < 0 || static_cast<std::uint64_t>(offset) + 8 > file_size) throw fail("offset out of bounds");
  in.seekg(offset);
  std::int64_t rank = 0;
  if (!in.read(reinterpret_cast<char*>(&rank), sizeof rank)) throw fail("truncated record");
  if (rank < 1 || rank > 4) throw fail("bad rank " + std::to_string(rank));
  hash = fnv1a(hash, &rank, sizeof rank);
  Shape shape;
  for (std::int64_t r = 0; r < rank; ++r) {
    std::int64_t d = 0;
    if (!in.read(reinterpret_cast<char*>(&d), sizeof d)) throw fail("truncated record");
    if (d < 1 || d > (1 << 24)) throw fail("bad dimension " + std::to_string(d));
    hash = fnv1a(hash, &d, sizeof d);
    shape.push_back(static_cast<std::size_t>(d));
  }
  const std::size_t n = numel(shape);
  const std::uint64_t end = static_cast<std::uint64_t>(offset) + 8 * (1 + rank) + 4 * n;
  if (end > file_size) throw fail("truncated record");
  std::vector<float> values(n);
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(4 * n)))
    throw fail("truncated record");
  hash = fnv1a(hash, values.data(), 4 * n);
  Tensor t(shape);
  for (std::size_t i = 0; i < n; ++i) t[i] = values[i];
  return t;
}

struct FeatureFiles {
  std::array<std::ifstream, 3> streams;
  std::array<std::uint64_t, 3> sizes{};

  explicit FeatureFiles(const std::filesystem::path& root) {
    for (int m = 0; m < 3; ++m) {
      const auto path = root / kModalityFiles[m];
      if (!std::filesystem::exists(path)) continue;
      streams[m].open(path, std::ios::binary);
      sizes[m] = std::filesystem::file_size(path);
    }
  }

  UtteranceSample read(const DatasetManifest& manifest, const ManifestRecord& rec) {
    UtteranceSample s;
    s.id = rec.id;
    s.label = rec.label;
    s.duration_seconds = rec.duration_seconds;
    s.fold = rec.fold;
    s.split = rec.split;
    std::uint64_t hash = kFnvBasis;
    const FeatureDims& d = manifest.dims;
    for (int m = 0; m < 3; ++m) {
      if (rec.offsets[m] < 0) continue;
      if (!streams[m].is_open())
        throw IoError("sample " + rec.id + ": missing " + kModalityFiles[m]);
      Tensor t = read_record(streams[m], sizes[m], rec.offsets[m], rec.id, hash);
      const bool ok = m == 0 ? (t.rank() == 1 && t.dim(0) == d.acoustic)
                             : (t.rank() == 2 && t.dim(1) == (m == 1 ? d.visual : d.lexical));
      if (!ok)
        throw IoError("sample " + rec.id + ": " + kModalityFiles[m] + " record has shape " +
                      shape_str(t.shape()));
      (m == 0 ? s.acoustic : m == 1 ? s.visual : s.lexical) = std::move(t);
    }
    if (hash != rec.checksum) throw IoError("sample " + rec.id + ": checksum mismatch");
    return s;
  }
};

}  // namespace

json norm_json(const NormStats& n) {
  json j;
  j["fitted_on"] = n.fitted_on;
  auto put = [&](const char* key, const std::optional<Tensor>& mean, const std::optional<Tensor>& sd) {
    if (mean) j[key] = {{"mean", tensor_json(*mean)}, {"std", tensor_json(*sd)}};
  };
  put("acoustic", n.acoustic_mean, n.acoustic_std);
  put("visual", n.visual_mean, n.visual_std);
  put("lexical", n.lexical_mean, n.lexical_std);
  return j;
}

NormStats norm_from_json(const json& j) {
  NormStats n;
  n.fitted_on = j.value("fitted_on", "");
  auto get = [&](const char* key, std::optional<Tensor>& mean, std::optional<Tensor>& sd) {
    if (!j.contains(key)) return;
    mean = tensor_from_json(j.at(key).at("mean"));
    sd = tensor_from_json(j.at(key).at("std"));
  };
  get("acoustic", n.acoustic_mean, n.acoustic_std);
  get("visual", n.visual_mean, n.visual_std);
  get("lexical", n.lexical_mean, n.lexical_std);
  return n;
}

json dims_json(const FeatureDims& d) {
  return {{"acoustic", d.acoustic}, {"visual", d.visual}, {"lexical", d.lexical},
          {"visual_steps", d.visual_steps}, {"lexical_steps", d.lexical_steps}};
}

FeatureDims dims_from_json(const json& j) {
  FeatureDims d;
  d.acoustic = j.at("acoustic");
  d.visual = j.at("visual");
  d.lexical = j.at("lexical");
  d.visual_steps = j.at("visual_steps");
  d.lexical_steps = j.at("lexical_steps");
  return d;
}

std::size_t DatasetManifest::labeled_count() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) {
    return r.split != Split::kUnlabeled;
  }));
}

std::size_t DatasetManifest::unlabeled_count() const {
  return records.size() - labeled_count();
}

const ManifestRecord& DatasetManifest::record(std::string_view id) const {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw IoError("manifest: no sample '" + std::string(id) + "'");
}

void write_dataset(const std::filesystem::path& dir, DatasetManifest& manifest,
                   std::span<const UtteranceSample> samples) {
  std::filesystem::create_directories(dir);
  std::array<std::ofstream, 3> files;
  std::array<std::int64_t, 3> pos{0, 0, 0};
  for (int m = 0; m < 3; ++m) {
    files[m].open(dir / kModalityFiles[m], std::ios::binary | std::ios::trunc);
    if (!files[m]) throw IoError("cannot write " + (dir / kModalityFiles[m]).string());
  }
  manifest.records.clear();
  for (const auto& s : samples) {
    if ((s.acoustic.has_value() + s.visual.has_value() + s.lexical.has_value()) < 2)
      throw ConfigError("sample " + s.id + ": at least two modalities are required");
    if (s.label.has_value() == (s.split == Split::kUnlabeled))
      throw ConfigError("sample " + s.id + ": label presence does not match its split");
    ManifestRecord rec;
    rec.id = s.id;
    rec.split = s.split;
    rec.label = s.label;
    rec.duration_seconds = s.duration_seconds;
    rec.fold = s.fold;
    std::uint64_t hash = kFnvBasis;
    const std::optional<Tensor>* parts[3] = {&s.acoustic, &s.visual, &s.lexical};
    for (int m = 0; m < 3; ++m) {
      if (!*parts[m]) continue;
      const std::string bytes = encode_record(**parts[m]);
      hash = fnv1a(hash, bytes.data(), bytes.size());
      rec.offsets[m] = pos[m];
      files[m].write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      pos[m] += static_cast<std::int64_t>(bytes.size());
    }
    rec.checksum = hash;
    manifest.records.push_back(std::move(rec));
  }
  for (auto& f : files)
    if (!f.flush()) throw IoError("write failed in " + dir.string());

  json j;
  j["version"] = manifest.version;
  j["dims"] = dims_json(manifest.dims);
  j["classes"] = manifest.classes;
  j["class_names"] = manifest.class_names;
  j["folds"] = manifest.folds;
  j["labeled_count"] = manifest.labeled_count();
  j["unlabeled_count"] = manifest.unlabeled_count();
  j["normalization"] = norm_json(manifest.norm);
  j["generator"] = manifest.generator;
  json recs = json::array();
  for (const auto& r : manifest.records) {
    json jr;
    jr["id"] = r.id;
    jr["split"] = split_name(r.split);
    jr["label"] = r.label ? json(*r.label) : json(nullptr);
    jr["duration"] = r.duration_seconds;
    jr["fold"] = r.fold;
    jr["offsets"] = r.offsets;
    jr["checksum"] = r.checksum;
    recs.push_back(std::move(jr));
  }
  j["samples"] = std::move(recs);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  manifest.root = dir;
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  const auto path = std::filesystem::is_directory(dir) ? dir / "manifest.json" : dir;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version");
    if (m.version != 1) throw IoError("manifest: unsupported version " + std::to_string(m.version));
    m.dims = dims_from_json(j.at("dims"));
    m.classes = j.at("classes");
    m.class_names = j.value("class_names", std::vector<std::string>{});
    m.folds = j.at("folds");
    m.norm = norm_from_json(j.at("normalization"));
    m.generator = j.value("generator", json::object());
    for (const auto& jr : j.at("samples")) {
      ManifestRecord r;
      r.id = jr.at("id");
      r.split = parse_split(jr.at("split").get<std::string>());
      if (!jr.at("label").is_null()) r.label = jr.at("label").get<int>();
      r.duration_seconds = jr.at("duration");
      r.fold = jr.at("fold");
      r.offsets = jr.at("offsets").get<std::array<std::int64_t, 3>>();
      r.checksum = jr.at("checksum");
      if (r.label && (*r.label < 0 || static_cast<std::size_t>(*r.label) >= m.classes))
        throw IoError("manifest: sample " + r.id + " has label out of range");
      if (r.split == Split::kLabeled && (r.fold < 0 || static_cast<std::size_t>(r.fold) >= m.folds))
        throw IoError("manifest: sample " + r.id + " has fold out of range");
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + ": " + e.what());
  }
  m.root = path.parent_path();
  return m;
}

UtteranceSample read_sample(const DatasetManifest& manifest, std::string_view id) {
  FeatureFiles files(manifest.root);
  return files.read(manifest, manifest.record(id));
}

std::vector<const UtteranceSample*> Dataset::folds(std::span<const int> which) const {
  std::vector<const UtteranceSample*> out;
  for (const auto& s : labeled)
    if (std::find(which.begin(), which.end(), s.fold) != which.end()) out.push_back(&s);
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = load_manifest(dir);
  FeatureFiles files(ds.manifest.root);
  for (const auto& rec : ds.manifest.records) {
    UtteranceSample s = files.read(ds.manifest, rec);
    switch (rec.split) {
      case Split::kLabeled: ds.labeled.push_back(std::move(s)); break;
      case Split::kTest: ds.test.push_back(std::move(s)); break;
      case Split::kUnlabeled: ds.unlabeled.push_back(std::move(s)); break;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Batching

PreparedSet prepare(std::span<const UtteranceSample* const> samples, const NormStats& stats,
                    const FeatureDims& dims, ModalitySet modalities, bool with_labels) {
  PreparedSet out;
  const std::size_t n = samples.size();
  if (n == 0) return out;
  if (modalities.acoustic) out.acoustic = Tensor({n, dims.acoustic});
  if (modalities.visual) {
    out.visual = Tensor({n, dims.visual_steps, dims.visual});
    out.visual_mask.assign(n * dims.visual_steps, 0);
  }
  if (modalities.lexical) {
    out.lexical = Tensor({n, dims.lexical_steps, dims.lexical});
    out.lexical_mask.assign(n * dims.lexical_steps, 0);
  }
  auto missing = [](const UtteranceSample& s, const char* what) {
    return ConfigError("sample " + s.id + " has no " + what + " features");
  };
  for (std::size_t i = 0; i < n; ++i) {
    const UtteranceSample s = z_normalize_apply(*samples[i], stats);
    out.ids.push_back(s.id);
    if (with_labels) {
      if (!s.label) throw ConfigError("sample " + s.id + " is unlabeled");
      out.labels.push_back(*s.label);
    }
    if (modalities.acoustic) {
      if (!s.acoustic) throw missing(s, "acoustic");
      std::copy(s.acoustic->data().begin(), s.acoustic->data().end(),
                out.acoustic->ptr() + i * dims.acoustic);
    }
    auto put_seq = [&](const std::optional<Tensor>& seq, Tensor& dst, std::vector<std::uint8_t>& mask,
                       std::size_t steps, std::size_t f, const char* what) {
      if (!seq) throw missing(s, what);
      const Tensor padded = pad_or_truncate(*seq, steps);
      std::copy(padded.data().begin(), padded.data().end(), dst.ptr() + i * steps * f);
      const std::size_t valid = std::min(seq->dim(0), steps);
      for (std::size_t t = 0; t < valid; ++t) mask[i * steps + t] = 1;
    };
    if (modalities.visual)
      put_seq(s.visual, *out.visual, out.visual_mask, dims.visual_steps, dims.visual, "visual");
    if (modalities.lexical)
      put_seq(s.lexical, *out.lexical, out.lexical_mask, dims.lexical_steps, dims.lexical, "lexical");
  }
  return out;
}

Batch gather(const PreparedSet& set, std::span<const std::size_t> rows, bool with_labels) {
  Batch b;
  auto take = [&](const Tensor& src) {
    Shape shape = src.shape();
    const std::size_t stride = src.size() / shape[0];
    shape[0] = rows.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy_n(src.ptr() + rows[i] * stride, stride, out.ptr() + i * stride);
    return out;
  };
  auto take_mask = [&](const std::vector<std::uint8_t>& src) {
    const std::size_t steps = src.size() / set.size();
    std::vector<std::uint8_t> out(rows.size() * steps);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * steps), steps,
                  out.begin() + static_cast<std::ptrdiff_t>(i * steps));
    return out;
  };
  if (set.acoustic) b.acoustic = take(*set.acoustic);
  if (set.visual) {
    b.visual = take(*set.visual);
    b.visual_mask = take_mask(set.visual_mask);
  }
  if (set.lexical) {
    b.lexical = take(*set.lexical);
    b.lexical_mask = take_mask(set.lexical_mask);
  }
  if (with_labels)
    for (std::size_t r : rows) b.labels.push_back(set.labels.at(r));
  return b;
}

DAEConfig fit_dae_config(DAEConfig base, const FeatureDims& dims) {
  base.acoustic.features = dims.acoustic;
  base.visual.steps = dims.visual_steps;
  base.visual.features = dims.visual;
  base.lexical.steps = dims.lexical_steps;
  base.lexical.features = dims.lexical;
  return base;
}

}  // namespace xmodal

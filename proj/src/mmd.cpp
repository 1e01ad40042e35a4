// src/mmd.cpp

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

#include "xmodal/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xmodal/error.hpp"
#include "xmodal/kernels.hpp"

namespace xmodal::mmd {

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel: sigma must be positive");
  if (x.size() != y.size())
    throw ShapeError("gaussian_kernel: vectors of dimension " + std::to_string(x.size()) +
                     " and " + std::to_string(y.size()));
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

double median_heuristic_sigma(const Tensor& p, const Tensor& q) {
  if (p.rank() != 2 || q.rank() != 2 || p.dim(1) != q.dim(1))
    throw ShapeError("median_heuristic_sigma: expected [m,d] and [n,d], got " +
                     shape_str(p.shape()) + " and " + shape_str(q.shape()));
  const std::size_t m = p.dim(0), n = q.dim(0), d = p.dim(1), total = m + n;
  if (total < 2) throw ConfigError("median_heuristic_sigma: need at least 2 points");
  std::vector<double> pooled(p.data().begin(), p.data().end());
  pooled.insert(pooled.end(), q.data().begin(), q.data().end());
  Tensor dist({total, total});
  kernels::squared_distances(total, total, d, pooled.data(), pooled.data(), dist.ptr());
  std::vector<double> upper;
  upper.reserve(total * (total - 1) / 2);
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = i + 1; j < total; ++j) upper.push_back(dist[i * total + j]);
  const std::size_t mid = upper.size() / 2;
  std::nth_element(upper.begin(), upper.begin() + mid, upper.end());
  double median = upper[mid];
  if (upper.size() % 2 == 0) {
    const double lower = *std::max_element(upper.begin(), upper.begin() + mid);
    median = 0.5 * (median + lower);
  }
  if (median <= 0.0) return 1.0;
  return std::sqrt(median / 2.0);
}

double resolve_sigma(KernelConfig& kernel, const Tensor& p, const Tensor& q) {
  if (kernel.policy == SigmaPolicy::kFixed) {
    if (!(kernel.sigma > 0.0)) throw ConfigError("kernel: fixed sigma must be positive");
    return kernel.sigma;
  }
  kernel.sigma = median_heuristic_sigma(p, q);
  return kernel.sigma;
}

namespace {

// Mean off-diagonal kernel value of a set with itself, written as
// 1 + m/(m-1) * (mean(K) - 1) so that identical points give exactly 1.
Var within_term(Var x, double scale, std::size_t m) {
  Var k = ops::exp(ops::scalar_mul(ops::squared_distances(x, x), scale));
  Var shifted = ops::scalar_add(ops::mean(k), -1.0);
  return ops::scalar_add(
      ops::scalar_mul(shifted, static_cast<double>(m) / static_cast<double>(m - 1)), 1.0);
}

void check_rows(const char* what, std::size_t m) {
  if (m < 2)
    throw ConfigError(std::string(what) +
                      ": the unbiased estimator needs at least 2 samples per set, got " +
                      std::to_string(m));
}

Var sum_vars(std::span<const Var> terms) {
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(total, terms[i]);
  return total;
}

void check_aligned(const std::vector<std::pair<Var, Var>>& pairs) {
  for (const auto& [a, b] : pairs)
    if (a.shape() != b.shape())
      throw ShapeError("matching: latent sets " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " differ in cardinality or dimension");
}

struct Range {
  std::size_t begin, end;
};

std::vector<Range> groups_of(std::size_t rows, const MatchingConfig& config) {
  const std::size_t count = group_count(rows, config);
  const std::size_t size = rows / count;
  std::vector<Range> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back({k * size, (k + 1) * size});
  return out;
}

}  // namespace

std::size_t group_count(std::size_t rows, const MatchingConfig& config) {
  const std::size_t g = config.group_size == 0 ? rows / 2 : config.group_size;
  if (g < 2)
    throw ConfigError("matching: groups need at least 2 samples for the unbiased estimator, "
                      "batch of " + std::to_string(rows) + " gives " + std::to_string(g));
  if (rows % g != 0 || rows / g < 2)
    throw ConfigError("matching: batch of " + std::to_string(rows) +
                      " does not split into at least two groups of " + std::to_string(g));
  return rows / g;
}

Var mmd_estimate(Var p, Var q, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("mmd_estimate: sigma must be positive");
  if (p.shape().size() != 2 || q.shape().size() != 2 || p.shape()[1] != q.shape()[1])
    throw ShapeError("mmd_estimate: expected [m,d] and [n,d], got " + shape_str(p.shape()) +
                     " and " + shape_str(q.shape()));
  const std::size_t m = p.shape()[0], n = q.shape()[0];
  check_rows("mmd_estimate", m);
  check_rows("mmd_estimate", n);
  const double scale = -1.0 / (2.0 * sigma * sigma);
  Var tp = within_term(p, scale, m);
  Var tq = within_term(q, scale, n);
  Var cross = ops::mean(ops::exp(ops::scalar_mul(ops::squared_distances(p, q), scale)));
  return ops::add(ops::add(tp, tq), ops::scalar_mul(cross, -2.0));
}

double mmd_estimate(const Tensor& p, const Tensor& q, KernelConfig& kernel) {
  const double sigma = resolve_sigma(kernel, p, q);
  Graph g;
  return mmd_estimate(g.constant(p), g.constant(q), sigma).item();
}

std::vector<std::pair<Var, Var>> matching_pairs(const Latents& z, bool include_visual_lexical) {
  std::vector<std::pair<Var, Var>> pairs;
  if (z.acoustic) {
    if (z.visual) pairs.emplace_back(*z.acoustic, *z.visual);
    if (z.lexical) pairs.emplace_back(*z.acoustic, *z.lexical);
    if (include_visual_lexical && z.visual && z.lexical) pairs.emplace_back(*z.visual, *z.lexical);
  } else if (z.visual && z.lexical) {
    pairs.emplace_back(*z.visual, *z.lexical);
  }
  if (pairs.empty()) throw ConfigError("matching: need at least two modalities");
  return pairs;
}

Var pair_loss(const Latents& z, KernelConfig& kernel, const MatchingConfig& config) {
  const auto pairs = matching_pairs(z, config.include_visual_lexical);
  check_aligned(pairs);
  std::vector<Var> terms;
  for (const auto& [a, b] : pairs) {
    const double sigma = resolve_sigma(kernel, a.value(), b.value());
    if (config.group_size == 0) {
      terms.push_back(mmd_estimate(a, b, sigma));
      continue;
    }
    std::vector<Var> per_group;
    const auto groups = groups_of(a.shape()[0], config);
    for (const auto& r : groups)
      per_group.push_back(
          mmd_estimate(ops::slice(a, 0, r.begin, r.end), ops::slice(b, 0, r.begin, r.end), sigma));
    terms.push_back(ops::scalar_mul(sum_vars(per_group), 1.0 / static_cast<double>(groups.size())));
  }
  return sum_vars(terms);
}

UnpairTerm unpair_loss(const Latents& z, KernelConfig& kernel,
                       std::span<const std::vector<std::size_t>> derange_second,
                       const MatchingConfig& config) {
  const auto pairs = matching_pairs(z, config.include_visual_lexical);
  check_aligned(pairs);
  if (derange_second.size() != pairs.size())
    throw ConfigError("unpair_loss: expected " + std::to_string(pairs.size()) +
                      " derangements, got " + std::to_string(derange_second.size()));
  const auto groups = groups_of(pairs.front().first.shape()[0], config);
  std::vector<Var> terms;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& perm = derange_second[p];
    if (perm.size() != groups.size())
      throw ConfigError("unpair_loss: derangement over " + std::to_string(perm.size()) +
                        " groups for a batch of " + std::to_string(groups.size()) + " groups");
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t k = 0; k < perm.size(); ++k) {
      if (perm[k] >= perm.size() || seen[perm[k]])
        throw ConfigError("unpair_loss: not a permutation");
      if (perm[k] == k)
        throw ConfigError("unpair_loss: permutation has fixed point " + std::to_string(k) +
                          "; unpaired sets must come from different samples");
      seen[perm[k]] = true;
    }
    const auto& [a, b] = pairs[p];
    const double sigma = resolve_sigma(kernel, a.value(), b.value());
    std::vector<Var> per_group;
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const Range& ra = groups[k];
      const Range& rb = groups[perm[k]];
      per_group.push_back(mmd_estimate(ops::slice(a, 0, ra.begin, ra.end),
                                       ops::slice(b, 0, rb.begin, rb.end), sigma));
    }
    terms.push_back(ops::scalar_mul(sum_vars(per_group), 1.0 / static_cast<double>(groups.size())));
  }
  Var raw = sum_vars(terms);
  const double raw_value = raw.item();
  Graph& g = *raw.graph;
  if (-raw_value < config.unpair_floor)
    return {g.constant(Tensor::scalar(config.unpair_floor)), raw_value, true};
  return {ops::negate(raw), raw_value, false};
}

}  // namespace xmodal::mmd

// tests/test_mmd.cpp

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
#include <vector>

#include "xmodal/error.hpp"
#include "xmodal/mmd.hpp"
#include "xmodal/rng.hpp"

using namespace xmodal;
using namespace xmodal::mmd;

namespace {

Tensor random(Rng& rng, Shape shape, double scale = 1.0, double shift = 0.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = shift + normal(rng, 0.0, scale);
  return t;
}

// Direct transcription of the unbiased estimator with explicit loops.
double brute_mmd(const Tensor& p, const Tensor& q, double sigma) {
  const std::size_t m = p.dim(0), n = q.dim(0), d = p.dim(1);
  auto k = [&](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double s = 0;
    for (std::size_t c = 0; c < d; ++c) s += (a[i * d + c] - b[j * d + c]) * (a[i * d + c] - b[j * d + c]);
    return std::exp(-s / (2 * sigma * sigma));
  };
  double pp = 0, qq = 0, pq = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) pp += k(p, i, p, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) qq += k(q, i, q, j);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) pq += k(p, i, q, j);
  return pp / (m * (m - 1.0)) + qq / (n * (n - 1.0)) - 2.0 * pq / (m * double(n));
}

Tensor rows(const Tensor& t, const std::vector<std::size_t>& idx) {
  const std::size_t d = t.dim(1);
  Tensor out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = t[idx[i] * d + c];
  return out;
}

Tensor row_range(const Tensor& t, std::size_t b, std::size_t e) {
  std::vector<std::size_t> idx;
  for (std::size_t i = b; i < e; ++i) idx.push_back(i);
  return rows(t, idx);
}

KernelConfig fixed(double sigma) { return {SigmaPolicy::kFixed, sigma}; }

}  // namespace

TEST_CASE("gaussian kernel hand values and symmetry") {
  const std::vector<double> a{0}, b{2}, c{1, 1}, d{1, 3};
  CHECK(gaussian_kernel(a, b, 1.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
  CHECK(gaussian_kernel(c, d, std::sqrt(2.0)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(gaussian_kernel(c, c, 0.3) == 1.0);
  Rng rng = make_rng(1, "kernel");
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(5), y(5);
    for (auto& v : x) v = normal(rng);
    for (auto& v : y) v = normal(rng);
    const double kxy = gaussian_kernel(x, y, 1.3);
    CHECK(kxy == gaussian_kernel(y, x, 1.3));
    CHECK(kxy > 0.0);
    CHECK(kxy <= 1.0);
  }
  CHECK_THROWS_AS(gaussian_kernel(a, b, 0.0), ConfigError);
  CHECK_THROWS_AS(gaussian_kernel(a, c, 1.0), ShapeError);
}

TEST_CASE("mmd estimate hand computed examples") {
  auto k1 = fixed(1.0);
  CHECK(mmd_estimate(Tensor::from({2, 1}, {0, 2}), Tensor::from({2, 1}, {0, 2}), k1) ==
        doctest::Approx(std::exp(-2.0) - 1.0).epsilon(1e-12));
  CHECK(std::abs(mmd_estimate(Tensor::from({2, 1}, {0, 2}), Tensor::from({2, 1}, {0, 2}), k1) -
                 (-0.864665)) <= 1e-6);
  CHECK(mmd_estimate(Tensor::from({2, 1}, {0, 0}), Tensor::from({2, 1}, {100, 100}), k1) ==
        doctest::Approx(2.0).epsilon(1e-12));
  const Tensor same = Tensor::full({5, 3}, 0.7);
  CHECK(mmd_estimate(same, same, k1) == 0.0);
  auto heuristic = KernelConfig{};
  CHECK(mmd_estimate(same, same, heuristic) == 0.0);
  CHECK(heuristic.sigma == 1.0);
}

TEST_CASE("mmd estimate agrees with the brute-force loops") {
  Rng rng = make_rng(2, "brute");
  for (int t = 0; t < 20; ++t) {
    Tensor p = random(rng, {7, 4}), q = random(rng, {9, 4}, 1.5, 0.5);
    auto k = fixed(1.2);
    CHECK(mmd_estimate(p, q, k) == doctest::Approx(brute_mmd(p, q, 1.2)).epsilon(1e-12));
  }
}

TEST_CASE("mmd is symmetric and permutation invariant") {
  Rng rng = make_rng(3, "sym");
  for (int t = 0; t < 20; ++t) {
    Tensor p = random(rng, {8, 3}), q = random(rng, {6, 3}, 1.0, 0.3);
    KernelConfig k;
    const double base = mmd_estimate(p, q, k);
    CHECK(std::abs(base - mmd_estimate(q, p, k)) <= 1e-12);
    Tensor pp = rows(p, permutation(rng, 8)), qp = rows(q, permutation(rng, 6));
    CHECK(std::abs(base - mmd_estimate(pp, qp, k)) <= 1e-10);
  }
}

TEST_CASE("equal multisets give a non-positive estimate matching the closed form") {
  Rng rng = make_rng(4, "equal");
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 3 + t % 6;
    Tensor p = random(rng, {m, 2});
    Tensor q = rows(p, permutation(rng, m));
    auto k = fixed(0.8);
    const double est = mmd_estimate(p, q, k);
    CHECK(est <= 1e-12);
    double s = 0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) s += gaussian_kernel(p.row(i).data(), p.row(j).data(), 0.8);
    const double md = static_cast<double>(m);
    CHECK(est == doctest::Approx(2 * s / (md * md * (md - 1)) - 2 / md).epsilon(1e-10));
  }
}

TEST_CASE("far-separated tight clusters approach 2") {
  Rng rng = make_rng(5, "far");
  Tensor p = random(rng, {10, 3}, 1e-3), q = random(rng, {12, 3}, 1e-3, 1000.0);
  auto k = fixed(1.0);
  CHECK(std::abs(mmd_estimate(p, q, k) - 2.0) <= 1e-3);
}

TEST_CASE("median heuristic") {
  CHECK(median_heuristic_sigma(Tensor::from({1, 1}, {0}), Tensor::from({1, 1}, {2})) ==
        doctest::Approx(std::sqrt(2.0)));
  CHECK(median_heuristic_sigma(Tensor::from({2, 1}, {0, 1}), Tensor::from({1, 1}, {3})) ==
        doctest::Approx(std::sqrt(2.0)));
  CHECK(median_heuristic_sigma(Tensor::full({3, 2}, 4.0), Tensor::full({2, 2}, 4.0)) == 1.0);
  // Even count of distances {1, 1, 4, 9, 9, 16}: mean of the middle pair.
  CHECK(median_heuristic_sigma(Tensor::from({3, 1}, {0, 1, 3}), Tensor::from({1, 1}, {4})) ==
        doctest::Approx(std::sqrt(6.5 / 2.0)));
}

TEST_CASE("estimator rejects sets with fewer than two rows") {
  auto k = fixed(1.0);
  try {
    mmd_estimate(Tensor::from({1, 2}, {0, 0}), Tensor::from({3, 2}, {0, 0, 1, 1, 2, 2}), k);
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("unbiased") != std::string::npos);
  }
  CHECK_THROWS_AS(mmd_estimate(Tensor({3, 2}), Tensor({3, 4}), k), ShapeError);
}

TEST_CASE("mmd gradient matches finite differences") {
  Rng rng = make_rng(6, "grad");
  for (int t = 0; t < 20; ++t) {
    Parameter p("p", random(rng, {6, 4})), q("q", random(rng, {5, 4}, 1.0, 0.4));
    const double sigma = median_heuristic_sigma(p.value, q.value);
    LossBuilder f = [&](Graph& g) { return mmd_estimate(g.param(p), g.param(q), sigma); };
    CHECK(grad_check(f, p, 1e-5) <= 1e-5);
    CHECK(grad_check(f, q, 1e-5) <= 1e-5);
  }
}

TEST_CASE("pair loss composes independent estimates") {
  Rng rng = make_rng(7, "pair");
  Tensor a = random(rng, {8, 4}), v = random(rng, {8, 4}), l = random(rng, {8, 4});
  Graph g;
  Latents z{g.constant(a), g.constant(v), g.constant(l)};
  KernelConfig k;
  const double loss = pair_loss(z, k).item();
  KernelConfig k1, k2;
  CHECK(loss == doctest::Approx(mmd_estimate(a, v, k1) + mmd_estimate(a, l, k2)).epsilon(1e-12));

  Latents two{g.constant(a), std::nullopt, g.constant(l)};
  KernelConfig k3, k4;
  CHECK(pair_loss(two, k3).item() == doctest::Approx(mmd_estimate(a, l, k4)).epsilon(1e-12));

  const Tensor c = Tensor::full({6, 3}, 0.25);
  Latents same{g.constant(c), g.constant(c), g.constant(c)};
  CHECK(pair_loss(same, k).item() == 0.0);

  Latents bad{g.constant(a), g.constant(random(rng, {6, 4})), g.constant(l)};
  CHECK_THROWS_AS(pair_loss(bad, k), ShapeError);
}

TEST_CASE("grouped pair loss averages per-group estimates") {
  Rng rng = make_rng(8, "grouped");
  Tensor a = random(rng, {12, 3}), v = random(rng, {12, 3}), l = random(rng, {12, 3});
  Graph g;
  Latents z{g.constant(a), g.constant(v), g.constant(l)};
  KernelConfig k = fixed(1.1);
  MatchingConfig cfg;
  cfg.group_size = 4;
  double expected = 0;
  for (std::size_t b = 0; b < 12; b += 4) {
    expected += brute_mmd(row_range(a, b, b + 4), row_range(v, b, b + 4), 1.1) / 3;
    expected += brute_mmd(row_range(a, b, b + 4), row_range(l, b, b + 4), 1.1) / 3;
  }
  CHECK(pair_loss(z, k, cfg).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("unpair loss matches an independent re-implementation") {
  Rng rng = make_rng(9, "unpair");
  Tensor a = random(rng, {8, 4}), v = random(rng, {8, 4}), l = random(rng, {8, 4}, 1.0, 0.5);
  Graph g;
  Latents z{g.constant(a), g.constant(v), g.constant(l)};
  KernelConfig k = fixed(1.4);

  SUBCASE("half batches") {
    const std::vector<std::vector<std::size_t>> perms{{1, 0}, {1, 0}};
    const auto term = unpair_loss(z, k, perms);
    const double raw = brute_mmd(row_range(a, 0, 4), row_range(v, 4, 8), 1.4) / 2 +
                       brute_mmd(row_range(a, 4, 8), row_range(v, 0, 4), 1.4) / 2 +
                       brute_mmd(row_range(a, 0, 4), row_range(l, 4, 8), 1.4) / 2 +
                       brute_mmd(row_range(a, 4, 8), row_range(l, 0, 4), 1.4) / 2;
    CHECK(term.raw == doctest::Approx(raw).epsilon(1e-12));
    CHECK(term.loss.item() == doctest::Approx(-raw).epsilon(1e-12));
    CHECK_FALSE(term.clamped);
  }
  SUBCASE("groups of two") {
    MatchingConfig cfg;
    cfg.group_size = 2;
    const std::vector<std::vector<std::size_t>> perms{{2, 3, 1, 0}, {1, 0, 3, 2}};
    const auto term = unpair_loss(z, k, perms, cfg);
    double raw = 0;
    for (std::size_t gi = 0; gi < 4; ++gi) {
      raw += brute_mmd(row_range(a, 2 * gi, 2 * gi + 2),
                       row_range(v, 2 * perms[0][gi], 2 * perms[0][gi] + 2), 1.4) / 4;
      raw += brute_mmd(row_range(a, 2 * gi, 2 * gi + 2),
                       row_range(l, 2 * perms[1][gi], 2 * perms[1][gi] + 2), 1.4) / 4;
    }
    CHECK(term.raw == doctest::Approx(raw).epsilon(1e-12));
  }
}

TEST_CASE("unpair loss edge cases") {
  Graph g;
  KernelConfig k;
  const Tensor c = Tensor::full({4, 2}, -0.5);
  Latents same{g.constant(c), g.constant(c), g.constant(c)};
  const std::vector<std::vector<std::size_t>> swap{{1, 0}, {1, 0}};
  CHECK(unpair_loss(same, k, swap).loss.item() == 0.0);

  // A fixed point is rejected.
  const std::vector<std::vector<std::size_t>> fixed_point{{0, 1}, {1, 0}};
  CHECK_THROWS_AS(unpair_loss(same, k, fixed_point), ConfigError);

  // Batch of two leaves one sample per half, below the estimator minimum.
  const Tensor two = Tensor::from({2, 1}, {0, 1});
  Latents tiny{g.constant(two), g.constant(two), g.constant(two)};
  CHECK_THROWS_AS(unpair_loss(tiny, k, swap), ConfigError);

  // Far-apart mismatched sets drive the raw sum past the floor.
  Tensor far_a({4, 1}), far_v({4, 1});
  for (std::size_t i = 0; i < 4; ++i) {
    far_a[i] = i < 2 ? 0.0 : 1000.0;
    far_v[i] = far_a[i];
  }
  Latents apart{g.constant(far_a), g.constant(far_v), g.constant(far_v)};
  KernelConfig k1 = fixed(1.0);
  const auto term = unpair_loss(apart, k1, swap);
  CHECK(term.clamped);
  CHECK(term.raw == doctest::Approx(4.0));
  CHECK(term.loss.item() == -2.0);
}

TEST_CASE("clamped unpair term passes no gradient") {
  Parameter a("a", Tensor::from({4, 1}, {0, 0.001, 1000, 1000.001}));
  Parameter v("v", Tensor::from({4, 1}, {0.002, 0.003, 1000, 1000.004}));
  Graph g;
  Latents z{g.param(a), g.param(v), std::nullopt};
  KernelConfig k = fixed(1.0);
  const std::vector<std::vector<std::size_t>> swap{{1, 0}};
  MatchingConfig cfg;
  cfg.unpair_floor = -1.0;
  auto term = unpair_loss(z, k, swap, cfg);
  REQUIRE(term.clamped);
  g.backward(ops::add(term.loss, ops::scalar_mul(ops::sum(g.param(a)), 0.0)));
  for (double x : a.grad.data()) CHECK(x == 0.0);
  for (double x : v.grad.data()) CHECK(x == 0.0);
}

// tests/test_kernels.cpp

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

#include <vector>

#include "xmodal/kernels.hpp"
#include "xmodal/rng.hpp"

using namespace xmodal;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

kernels::ConvGeometry geometry() {
  kernels::ConvGeometry g;
  g.batch = 3;
  g.in_channels = 4;
  g.in_h = 18;
  g.in_w = 40;
  g.out_channels = 8;
  g.kernel_h = g.kernel_w = 4;
  g.stride = 2;
  g.pad = 1;
  g.infer_output();
  return g;
}

// Runs `f` at two thread counts and returns both outputs.
template <class F>
std::pair<std::vector<double>, std::vector<double>> at_thread_counts(F f) {
  const int saved = kernels::max_threads();
  kernels::set_threads(1);
  auto one = f();
  kernels::set_threads(4);
  auto four = f();
  kernels::set_threads(saved);
  return {one, four};
}

}  // namespace

TEST_CASE("gemm variants agree with the serial reference") {
  Rng rng = make_rng(7, "gemm");
  const std::size_t m = 70, k = 65, n = 80;
  auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
  auto at = random_vec(rng, k * m), bt = random_vec(rng, n * k);
  auto c0 = random_vec(rng, m * n);

  for (bool acc : {false, true}) {
    auto p = c0, s = c0;
    kernels::gemm_nn(m, k, n, a.data(), b.data(), p.data(), acc);
    kernels::serial::gemm_nn(m, k, n, a.data(), b.data(), s.data(), acc);
    CHECK(max_diff(p, s) <= 1e-12);

    p = c0, s = c0;
    kernels::gemm_nt(m, k, n, a.data(), bt.data(), p.data(), acc);
    kernels::serial::gemm_nt(m, k, n, a.data(), bt.data(), s.data(), acc);
    CHECK(max_diff(p, s) <= 1e-12);

    p = c0, s = c0;
    kernels::gemm_tn(m, k, n, at.data(), b.data(), p.data(), acc);
    kernels::serial::gemm_tn(m, k, n, at.data(), b.data(), s.data(), acc);
    CHECK(max_diff(p, s) <= 1e-12);
  }
}

TEST_CASE("serial gemm matches a hand computed product") {
  const double a[] = {1, 2, 3, 4, 5, 6};   // 2x3
  const double b[] = {7, 8, 9, 10, 11, 12};  // 3x2
  double c[4];
  kernels::serial::gemm_nn(2, 3, 2, a, b, c, false);
  CHECK(c[0] == 58);
  CHECK(c[1] == 64);
  CHECK(c[2] == 139);
  CHECK(c[3] == 154);
}

TEST_CASE("conv kernels agree with the serial reference") {
  const auto g = geometry();
  CHECK(g.out_h == 9);
  CHECK(g.out_w == 20);
  Rng rng = make_rng(7, "conv");
  auto x = random_vec(rng, g.in_size()), w = random_vec(rng, g.weight_size());
  auto dy = random_vec(rng, g.out_size());

  std::vector<double> yp(g.out_size()), ys(g.out_size());
  kernels::conv2d_forward(g, x.data(), w.data(), yp.data());
  kernels::serial::conv2d_forward(g, x.data(), w.data(), ys.data());
  CHECK(max_diff(yp, ys) <= 1e-12);

  std::vector<double> dxp(g.in_size(), 0.5), dxs(g.in_size(), 0.5);
  kernels::conv2d_backward_data(g, dy.data(), w.data(), dxp.data());
  kernels::serial::conv2d_backward_data(g, dy.data(), w.data(), dxs.data());
  CHECK(max_diff(dxp, dxs) <= 1e-12);

  std::vector<double> dwp(g.weight_size(), -0.25), dws(g.weight_size(), -0.25);
  kernels::conv2d_backward_filter(g, x.data(), dy.data(), dwp.data());
  kernels::serial::conv2d_backward_filter(g, x.data(), dy.data(), dws.data());
  CHECK(max_diff(dwp, dws) <= 1e-11);
}

TEST_CASE("conv backward data is the adjoint of conv forward") {
  // <conv(x), dy> == <x, conv^T(dy)> for any x, dy.
  const auto g = geometry();
  Rng rng = make_rng(11, "adjoint");
  auto x = random_vec(rng, g.in_size()), w = random_vec(rng, g.weight_size());
  auto dy = random_vec(rng, g.out_size());
  std::vector<double> y(g.out_size()), dx(g.in_size(), 0.0);
  kernels::serial::conv2d_forward(g, x.data(), w.data(), y.data());
  kernels::serial::conv2d_backward_data(g, dy.data(), w.data(), dx.data());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * dy[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * dx[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("squared distances agree and vanish on identical rows") {
  Rng rng = make_rng(3, "dist");
  const std::size_t m = 120, n = 90, d = 16;
  auto x = random_vec(rng, m * d), y = random_vec(rng, n * d);
  std::vector<double> p(m * n), s(m * n);
  kernels::squared_distances(m, n, d, x.data(), y.data(), p.data());
  kernels::serial::squared_distances(m, n, d, x.data(), y.data(), s.data());
  CHECK(max_diff(p, s) <= 1e-12);

  std::vector<double> self(m * m);
  kernels::squared_distances(m, m, d, x.data(), x.data(), self.data());
  for (std::size_t i = 0; i < m; ++i) CHECK(self[i * m + i] == 0.0);
}

TEST_CASE("parallel kernels are bit-stable across thread counts") {
  Rng rng = make_rng(5, "stable");
  const std::size_t m = 96, k = 80, n = 72;
  auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
  {
    auto [one, four] = at_thread_counts([&] {
      std::vector<double> c(m * n);
      kernels::gemm_nn(m, k, n, a.data(), b.data(), c.data(), false);
      return c;
    });
    CHECK(one == four);
  }
  const auto g = geometry();
  auto x = random_vec(rng, g.in_size()), w = random_vec(rng, g.weight_size());
  auto dy = random_vec(rng, g.out_size());
  {
    auto [one, four] = at_thread_counts([&] {
      std::vector<double> y(g.out_size());
      kernels::conv2d_forward(g, x.data(), w.data(), y.data());
      return y;
    });
    CHECK(one == four);
  }
  {
    auto [one, four] = at_thread_counts([&] {
      std::vector<double> dw(g.weight_size(), 0.0);
      kernels::conv2d_backward_filter(g, x.data(), dy.data(), dw.data());
      return dw;
    });
    CHECK(one == four);
  }
  {
    auto [one, four] = at_thread_counts([&] {
      std::vector<double> dx(g.in_size(), 0.0);
      kernels::conv2d_backward_data(g, dy.data(), w.data(), dx.data());
      return dx;
    });
    CHECK(one == four);
  }
}

TEST_CASE("conv geometry rejects kernels larger than the padded input") {
  kernels::ConvGeometry g;
  g.in_h = 2;
  g.in_w = 2;
  g.kernel_h = g.kernel_w = 5;
  CHECK_THROWS(g.infer_output());
}

// bench/bench_kernels.cpp

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

// Serial reference kernels against their OpenMP counterparts. Sizes follow
// the full-size model: a 128-row batch through the acoustic MLP and the
// visual encoder's first convolution.

#include <benchmark/benchmark.h>

#include <vector>

#include "xmodal/kernels.hpp"
#include "xmodal/rng.hpp"

namespace {

using namespace xmodal;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "bench");
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_buffer(m * k, 1), b = random_buffer(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    Gemm(m, k, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

kernels::ConvGeometry visual_conv() {
  kernels::ConvGeometry g;
  g.batch = 32;
  g.in_channels = 1;
  g.in_h = 18;
  g.in_w = 342;
  g.out_channels = 16;
  g.kernel_h = g.kernel_w = 3;
  g.stride = 1;
  g.pad = 1;
  g.infer_output();
  return g;
}

template <auto Conv>
void BM_conv_forward(benchmark::State& state) {
  const auto g = visual_conv();
  const auto x = random_buffer(g.in_size(), 3), w = random_buffer(g.weight_size(), 4);
  std::vector<double> y(g.out_size());
  for (auto _ : state) {
    Conv(g, x.data(), w.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Conv>
void BM_conv_backward_filter(benchmark::State& state) {
  const auto g = visual_conv();
  const auto x = random_buffer(g.in_size(), 5), dy = random_buffer(g.out_size(), 6);
  std::vector<double> dw(g.weight_size());
  for (auto _ : state) {
    Conv(g, x.data(), dy.data(), dw.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

template <auto Dist>
void BM_squared_distances(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto x = random_buffer(m * 128, 7), y = random_buffer(m * 128, 8);
  std::vector<double> out(m * m);
  for (auto _ : state) {
    Dist(m, m, 128, x.data(), y.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm<xmodal::kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Args({128, 1582, 512});
BENCHMARK(BM_gemm<xmodal::kernels::gemm_nn>)->Name("gemm_nn/openmp")->Args({128, 1582, 512});
BENCHMARK(BM_gemm<xmodal::kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Args({1582, 128, 512});
BENCHMARK(BM_gemm<xmodal::kernels::gemm_tn>)->Name("gemm_tn/openmp")->Args({1582, 128, 512});
BENCHMARK(BM_conv_forward<xmodal::kernels::serial::conv2d_forward>)->Name("conv_forward/serial");
BENCHMARK(BM_conv_forward<xmodal::kernels::conv2d_forward>)->Name("conv_forward/openmp");
BENCHMARK(BM_conv_backward_filter<xmodal::kernels::serial::conv2d_backward_filter>)
    ->Name("conv_backward_filter/serial");
BENCHMARK(BM_conv_backward_filter<xmodal::kernels::conv2d_backward_filter>)
    ->Name("conv_backward_filter/openmp");
BENCHMARK(BM_squared_distances<xmodal::kernels::serial::squared_distances>)
    ->Name("squared_distances/serial")->Arg(128);
BENCHMARK(BM_squared_distances<xmodal::kernels::squared_distances>)
    ->Name("squared_distances/openmp")->Arg(128);

BENCHMARK_MAIN();

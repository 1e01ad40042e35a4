// src/kernels.cpp

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

#include "xmodal/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "xmodal/error.hpp"

namespace xmodal::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::int64_t kParallelWork = 1 << 15;

inline bool in_range(std::int64_t v, std::size_t hi) {
  return v >= 0 && v < static_cast<std::int64_t>(hi);
}
}  // namespace

void ConvGeometry::infer_output() {
  auto out_dim = [this](std::size_t in, std::size_t k, const char* axis) {
    if (in + 2 * pad < k)
      throw ShapeError(std::string("conv2d: kernel ") + std::to_string(k) + " exceeds padded " +
                       axis + " extent " + std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
  };
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  out_h = out_dim(in_h, kernel_h, "height");
  out_w = out_dim(in_w, kernel_w, "width");
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

// ---------------------------------------------------------------------------
// Parallel kernels

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
  const bool par = static_cast<std::int64_t>(m * k * n) > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
  const bool par = static_cast<std::int64_t>(m * k * n) > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + s : s;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
  const bool par = static_cast<std::int64_t>(m * k * n) > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* y) {
  const auto planes = static_cast<std::int64_t>(g.batch * g.out_channels);
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t in_plane = g.in_h * g.in_w;
  const bool par = static_cast<std::int64_t>(g.out_size() * g.in_channels * g.kernel_h *
                                             g.kernel_w) > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t bo = 0; bo < planes; ++bo) {
    const std::size_t b = bo / g.out_channels, o = bo % g.out_channels;
    double* yp = y + bo * out_plane;
    std::fill(yp, yp + out_plane, 0.0);
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      const double* xp = x + (b * g.in_channels + c) * in_plane;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const double wv = w[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                            static_cast<std::int64_t>(g.pad);
            if (!in_range(iy, g.in_h)) continue;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                              static_cast<std::int64_t>(g.pad);
              if (!in_range(ix, g.in_w)) continue;
              yp[oy * g.out_w + ox] += wv * xp[iy * g.in_w + ix];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_data(const ConvGeometry& g, const double* dy, const double* w, double* dx) {
  const auto planes = static_cast<std::int64_t>(g.batch * g.in_channels);
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t in_plane = g.in_h * g.in_w;
  const bool par = static_cast<std::int64_t>(g.out_size() * g.in_channels * g.kernel_h *
                                             g.kernel_w) > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t bc = 0; bc < planes; ++bc) {
    const std::size_t b = bc / g.in_channels, c = bc % g.in_channels;
    double* dxp = dx + bc * in_plane;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const double* dyp = dy + (b * g.out_channels + o) * out_plane;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const double wv = w[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                            static_cast<std::int64_t>(g.pad);
            if (!in_range(iy, g.in_h)) continue;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                              static_cast<std::int64_t>(g.pad);
              if (!in_range(ix, g.in_w)) continue;
              dxp[iy * g.in_w + ix] += wv * dyp[oy * g.out_w + ox];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_filter(const ConvGeometry& g, const double* x, const double* dy, double* dw) {
  const auto outs = static_cast<std::int64_t>(g.out_channels);
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t in_plane = g.in_h * g.in_w;
  const bool par = static_cast<std::int64_t>(g.out_size() * g.in_channels * g.kernel_h *
                                             g.kernel_w) > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t o = 0; o < outs; ++o) {
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          double s = 0.0;
          for (std::size_t b = 0; b < g.batch; ++b) {
            const double* xp = x + (b * g.in_channels + c) * in_plane;
            const double* dyp = dy + (b * g.out_channels + o) * out_plane;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                              static_cast<std::int64_t>(g.pad);
              if (!in_range(iy, g.in_h)) continue;
              for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                                static_cast<std::int64_t>(g.pad);
                if (!in_range(ix, g.in_w)) continue;
                s += xp[iy * g.in_w + ix] * dyp[oy * g.out_w + ox];
              }
            }
          }
          dw[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] += s;
        }
      }
    }
  }
}

void squared_distances(std::size_t m, std::size_t n, std::size_t d, const double* x,
                       const double* y, double* out) {
  const auto rows = static_cast<std::int64_t>(m);
  const bool par = static_cast<std::int64_t>(m * n * d) > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* xi = x + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* yj = y + j * d;
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = xi[p] - yj[p];
        s += diff * diff;
      }
      out[i * n + j] = s;
    }
  }
}

// ---------------------------------------------------------------------------
// Serial reference kernels

namespace serial {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* y) {
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          double s = 0.0;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                          static_cast<std::int64_t>(g.pad);
                auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                          static_cast<std::int64_t>(g.pad);
                if (!in_range(iy, g.in_h) || !in_range(ix, g.in_w)) continue;
                s += w[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] *
                     x[((b * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
          y[((b * g.out_channels + o) * g.out_h + oy) * g.out_w + ox] = s;
        }
}

void conv2d_backward_data(const ConvGeometry& g, const double* dy, const double* w, double* dx) {
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const double gy = dy[((b * g.out_channels + o) * g.out_h + oy) * g.out_w + ox];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                          static_cast<std::int64_t>(g.pad);
                auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                          static_cast<std::int64_t>(g.pad);
                if (!in_range(iy, g.in_h) || !in_range(ix, g.in_w)) continue;
                dx[((b * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] +=
                    gy * w[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
              }
        }
}

void conv2d_backward_filter(const ConvGeometry& g, const double* x, const double* dy, double* dw) {
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const double gy = dy[((b * g.out_channels + o) * g.out_h + oy) * g.out_w + ox];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                          static_cast<std::int64_t>(g.pad);
                auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                          static_cast<std::int64_t>(g.pad);
                if (!in_range(iy, g.in_h) || !in_range(ix, g.in_w)) continue;
                dw[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] +=
                    gy * x[((b * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
        }
}

void squared_distances(std::size_t m, std::size_t n, std::size_t d, const double* x,
                       const double* y, double* out) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) s += (x[i * d + p] - y[j * d + p]) * (x[i * d + p] - y[j * d + p]);
      out[i * n + j] = s;
    }
}

}  // namespace serial

}  // namespace xmodal::kernels

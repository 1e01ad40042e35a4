// include/xmodal/kernels.hpp

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

// Dense inner loops used by the autodiff ops.
//
// Two implementations of every kernel live here. kernels::serial is the
// plain reference written for readability; the unqualified kernels:: entry
// points are the OpenMP versions the ops call. Each parallel kernel assigns
// every output element to exactly one thread and sums in a fixed order, so
// results do not depend on the thread count. They may differ from the serial
// reference in the last bits because the loop nests differ.

#pragma once

#include <cstddef>

namespace xmodal::kernels {

/// Geometry of a 2-D convolution (NCHW input, OIHW weight).
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1, in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_h = 1, out_w = 1;

  /// Fills out_h/out_w from the other fields; throws ShapeError when the
  /// kernel does not fit the padded input.
  void infer_output();
  std::size_t in_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t out_size() const { return batch * out_channels * out_h * out_w; }
  std::size_t weight_size() const { return out_channels * in_channels * kernel_h * kernel_w; }
};

// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
// C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);

// y = conv(x, w); y is overwritten.
void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* y);
// dx += conv^T(dy, w)
void conv2d_backward_data(const ConvGeometry& g, const double* dy, const double* w, double* dx);
// dw += correlation of x with dy
void conv2d_backward_filter(const ConvGeometry& g, const double* x, const double* dy, double* dw);

// out[i,j] = sum_k (x[i,k] - y[j,k])^2, computed from differences so that
// identical rows give exactly zero.
void squared_distances(std::size_t m, std::size_t n, std::size_t d, const double* x,
                       const double* y, double* out);

namespace serial {
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* y);
void conv2d_backward_data(const ConvGeometry& g, const double* dy, const double* w, double* dx);
void conv2d_backward_filter(const ConvGeometry& g, const double* x, const double* dy, double* dw);
void squared_distances(std::size_t m, std::size_t n, std::size_t d, const double* x,
                       const double* y, double* out);
}  // namespace serial

/// Number of OpenMP threads the parallel kernels use (1 when built without
/// OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace xmodal::kernels

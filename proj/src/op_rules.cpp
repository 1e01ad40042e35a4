// src/op_rules.cpp

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

#include "op_rules.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include "xmodal/error.hpp"
#include "xmodal/kernels.hpp"

namespace xmodal::detail {

namespace {

[[noreturn]] void fail(OpKind kind, const std::string& expected, const std::string& got) {
  throw ShapeError(std::string(op_name(kind)) + ": expected " + expected + ", got " + got);
}

void expect_arity(OpKind kind, std::span<const Tensor* const> in, std::size_t lo,
                  std::size_t hi) {
  if (in.size() < lo || in.size() > hi)
    fail(kind, std::to_string(lo) + (lo == hi ? "" : "-" + std::to_string(hi)) + " inputs",
         std::to_string(in.size()));
}

void expect_rank(OpKind kind, const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    fail(kind, std::string(what) + " of rank " + std::to_string(rank), shape_str(t.shape()));
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Leading/trailing extent around an axis, for concat, slice and reverse.
struct AxisSplit {
  std::size_t outer, extent, inner;
};
AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// ---------------------------------------------------------------------------
// Attention core over one (batch, head) slice. Row strides allow the heads of
// a fused [B,T,P] projection to be addressed in place.

struct AttnView {
  std::size_t t, s, d, dv;
  const double* q;
  std::size_t q_ld;
  const double* k;
  std::size_t k_ld;
  const double* v;
  std::size_t v_ld;
  const std::uint8_t* mask;  // length s or null
};

void attn_forward(const AttnView& a, double* probs, double* o, std::size_t o_ld) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(a.d));
  for (std::size_t i = 0; i < a.t; ++i) {
    double* p = probs + i * a.s;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < a.s; ++j) {
      if (a.mask && !a.mask[j]) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < a.d; ++c) dot += a.q[i * a.q_ld + c] * a.k[j * a.k_ld + c];
      p[j] = dot * scale;
      mx = std::max(mx, p[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < a.s; ++j) {
      if (a.mask && !a.mask[j]) {
        p[j] = 0.0;
        continue;
      }
      p[j] = std::exp(p[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < a.s; ++j) p[j] /= z;
    double* oi = o + i * o_ld;
    for (std::size_t c = 0; c < a.dv; ++c) oi[c] = 0.0;
    for (std::size_t j = 0; j < a.s; ++j) {
      if (p[j] == 0.0) continue;
      for (std::size_t c = 0; c < a.dv; ++c) oi[c] += p[j] * a.v[j * a.v_ld + c];
    }
  }
}

// Accumulates gradients of q, k, v (null pointers are skipped).
void attn_backward(const AttnView& a, const double* probs, const double* go, std::size_t go_ld,
                   double* gq, double* gk, double* gv) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(a.d));
  std::vector<double> gs(a.s);
  for (std::size_t i = 0; i < a.t; ++i) {
    const double* p = probs + i * a.s;
    const double* goi = go + i * go_ld;
    double dotp = 0.0;
    for (std::size_t j = 0; j < a.s; ++j) {
      double gp = 0.0;
      for (std::size_t c = 0; c < a.dv; ++c) gp += goi[c] * a.v[j * a.v_ld + c];
      gs[j] = gp;
      dotp += gp * p[j];
      if (gv && p[j] != 0.0)
        for (std::size_t c = 0; c < a.dv; ++c) gv[j * a.v_ld + c] += p[j] * goi[c];
    }
    for (std::size_t j = 0; j < a.s; ++j) {
      const double g = p[j] * (gs[j] - dotp) * scale;
      if (g == 0.0) continue;
      if (gq)
        for (std::size_t c = 0; c < a.d; ++c) gq[i * a.q_ld + c] += g * a.k[j * a.k_ld + c];
      if (gk)
        for (std::size_t c = 0; c < a.d; ++c) gk[j * a.k_ld + c] += g * a.q[i * a.q_ld + c];
    }
  }
}

void check_mask(OpKind kind, const OpAttrs& attrs, std::size_t batch, std::size_t keys) {
  if (attrs.key_mask.empty()) return;
  if (attrs.key_mask.size() != batch * keys)
    fail(kind, "key mask of " + std::to_string(batch * keys) + " entries",
         std::to_string(attrs.key_mask.size()));
  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t j = 0; j < keys; ++j) any = any || attrs.key_mask[b * keys + j];
    if (!any) fail(kind, "at least one attended key per batch item", "fully masked row");
  }
}

void add_colsum(const double* g, std::size_t rows, std::size_t cols, double* out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += g[r * cols + c];
}

// y[rows, n] = x[rows, k] * w[k, n] + b[n]
Tensor affine(const Tensor& x, std::size_t rows, const Tensor& w, const Tensor& b) {
  const std::size_t k = w.dim(0), n = w.dim(1);
  Tensor y({rows, n});
  kernels::gemm_nn(rows, k, n, x.ptr(), w.ptr(), y.ptr(), false);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] += b[c];
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor forward_rule(OpKind kind, std::span<const Tensor* const> in, const OpAttrs& attrs,
                    std::vector<Tensor>& saved) {
  switch (kind) {
    case OpKind::kMatmul: {
      expect_arity(kind, in, 2, 2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      expect_rank(kind, b, 2, "right operand");
      if (a.rank() < 1 || a.shape().back() != b.dim(0))
        fail(kind, "left operand [...x" + std::to_string(b.dim(0)) + "] for right " +
                       shape_str(b.shape()),
             shape_str(a.shape()));
      Shape out(a.shape().begin(), a.shape().end() - 1);
      out.push_back(b.dim(1));
      Tensor y(out);
      const std::size_t k = b.dim(0), n = b.dim(1);
      kernels::gemm_nn(a.size() / k, k, n, a.ptr(), b.ptr(), y.ptr(), false);
      return y;
    }
    case OpKind::kAdd: {
      expect_arity(kind, in, 2, 2);
      if (in[0]->shape() != in[1]->shape())
        fail(kind, "equal shapes " + shape_str(in[0]->shape()), shape_str(in[1]->shape()));
      Tensor y = *in[0];
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += (*in[1])[i];
      return y;
    }
    case OpKind::kBiasAdd: {
      expect_arity(kind, in, 2, 2);
      const Tensor& x = *in[0];
      const Tensor& b = *in[1];
      if (x.rank() < 1 || b.rank() != 1 || b.dim(0) != x.shape().back())
        fail(kind, "bias [" + std::to_string(last_dim(x)) + "] for input " + shape_str(x.shape()),
             shape_str(b.shape()));
      Tensor y = x;
      const std::size_t n = b.size();
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i % n];
      return y;
    }
    case OpKind::kRelu: {
      expect_arity(kind, in, 1, 1);
      Tensor y = *in[0];
      for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
      return y;
    }
    case OpKind::kGelu: {
      expect_arity(kind, in, 1, 1);
      Tensor y = *in[0];
      for (auto& v : y.data()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
      return y;
    }
    case OpKind::kSoftmax: {
      expect_arity(kind, in, 1, 1);
      Tensor y = *in[0];
      const std::size_t n = last_dim(y), rows = y.size() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        double* p = y.ptr() + r * n;
        const double mx = *std::max_element(p, p + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (p[j] = std::exp(p[j] - mx));
        for (std::size_t j = 0; j < n; ++j) p[j] /= z;
      }
      return y;
    }
    case OpKind::kLayerNorm: {
      expect_arity(kind, in, 3, 3);
      const Tensor& x = *in[0];
      const std::size_t n = last_dim(x);
      if (x.rank() < 1) fail(kind, "input of rank >= 1", shape_str(x.shape()));
      if (in[1]->shape() != Shape{n} || in[2]->shape() != Shape{n})
        fail(kind, "gain and shift of shape [" + std::to_string(n) + "]",
             shape_str(in[1]->shape()) + " and " + shape_str(in[2]->shape()));
      const std::size_t rows = x.size() / n;
      Tensor xhat(x.shape());
      Tensor rstd({rows});
      Tensor y(x.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.ptr() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xr[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(n);
        const double rs = 1.0 / std::sqrt(var + attrs.eps);
        rstd[r] = rs;
        for (std::size_t j = 0; j < n; ++j) {
          const double h = (xr[j] - mu) * rs;
          xhat[r * n + j] = h;
          y[r * n + j] = (*in[1])[j] * h + (*in[2])[j];
        }
      }
      saved = {std::move(xhat), std::move(rstd)};
      return y;
    }
    case OpKind::kReshape: {
      expect_arity(kind, in, 1, 1);
      if (numel(attrs.dims) != in[0]->size())
        fail(kind, "target with " + std::to_string(in[0]->size()) + " elements",
             shape_str(attrs.dims));
      return in[0]->reshaped(attrs.dims);
    }
    case OpKind::kTranspose: {
      expect_arity(kind, in, 1, 1);
      const Tensor& x = *in[0];
      std::vector<std::size_t> perm = attrs.dims;
      if (perm.empty()) {
        if (x.rank() != 2) fail(kind, "explicit permutation for rank != 2", shape_str(x.shape()));
        perm = {1, 0};
      }
      std::vector<std::size_t> check = perm;
      std::sort(check.begin(), check.end());
      for (std::size_t i = 0; i < check.size(); ++i)
        if (check[i] != i || check.size() != x.rank())
          fail(kind, "permutation of " + std::to_string(x.rank()) + " axes", shape_str(perm));
      Shape out(x.rank());
      for (std::size_t i = 0; i < x.rank(); ++i) out[i] = x.dim(perm[i]);
      Tensor y(out);
      const auto in_st = strides_of(x.shape());
      std::vector<std::size_t> idx(x.rank(), 0);
      for (std::size_t o = 0; o < y.size(); ++o) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) src += idx[i] * in_st[perm[i]];
        y[o] = x[src];
        for (std::size_t i = idx.size(); i-- > 0;) {
          if (++idx[i] < out[i]) break;
          idx[i] = 0;
        }
      }
      return y;
    }
    case OpKind::kConcat: {
      if (in.empty()) fail(kind, "at least one input", "none");
      const Shape& s0 = in[0]->shape();
      if (attrs.axis >= s0.size())
        fail(kind, "axis < rank " + std::to_string(s0.size()), std::to_string(attrs.axis));
      Shape out = s0;
      out[attrs.axis] = 0;
      for (const Tensor* t : in) {
        bool ok = t->rank() == s0.size();
        for (std::size_t i = 0; ok && i < s0.size(); ++i)
          ok = i == attrs.axis || t->dim(i) == s0[i];
        if (!ok)
          fail(kind, "shapes matching " + shape_str(s0) + " off axis " +
                         std::to_string(attrs.axis),
               shape_str(t->shape()));
        out[attrs.axis] += t->dim(attrs.axis);
      }
      Tensor y(out);
      const auto sp = split_at(out, attrs.axis);
      std::size_t offset = 0;
      for (const Tensor* t : in) {
        const std::size_t chunk = t->dim(attrs.axis) * sp.inner;
        for (std::size_t o = 0; o < sp.outer; ++o)
          std::copy_n(t->ptr() + o * chunk, chunk,
                      y.ptr() + o * sp.extent * sp.inner + offset * sp.inner);
        offset += t->dim(attrs.axis);
      }
      return y;
    }
    case OpKind::kSlice: {
      expect_arity(kind, in, 1, 1);
      const Tensor& x = *in[0];
      if (attrs.axis >= x.rank() || attrs.begin >= attrs.end || attrs.end > x.dim(attrs.axis))
        fail(kind, "range within axis " + std::to_string(attrs.axis) + " of " +
                       shape_str(x.shape()),
             "[" + std::to_string(attrs.begin) + ", " + std::to_string(attrs.end) + ")");
      Shape out = x.shape();
      out[attrs.axis] = attrs.end - attrs.begin;
      Tensor y(out);
      const auto sp = split_at(x.shape(), attrs.axis);
      const std::size_t chunk = out[attrs.axis] * sp.inner;
      for (std::size_t o = 0; o < sp.outer; ++o)
        std::copy_n(x.ptr() + (o * sp.extent + attrs.begin) * sp.inner, chunk,
                    y.ptr() + o * chunk);
      return y;
    }
    case OpKind::kReverseAxis: {
      expect_arity(kind, in, 1, 1);
      const Tensor& x = *in[0];
      if (attrs.axis >= x.rank())
        fail(kind, "axis < rank " + std::to_string(x.rank()), std::to_string(attrs.axis));
      Tensor y(x.shape());
      const auto sp = split_at(x.shape(), attrs.axis);
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.extent; ++i)
          std::copy_n(x.ptr() + (o * sp.extent + i) * sp.inner, sp.inner,
                      y.ptr() + (o * sp.extent + sp.extent - 1 - i) * sp.inner);
      return y;
    }
    case OpKind::kConv2d: {
      expect_arity(kind, in, 2, 3);
      const Tensor& x = *in[0];
      const Tensor& w = *in[1];
      expect_rank(kind, x, 4, "input [B,C,H,W]");
      expect_rank(kind, w, 4, "weight [O,C,kh,kw]");
      if (w.dim(1) != x.dim(1))
        fail(kind, "weight with " + std::to_string(x.dim(1)) + " input channels",
             shape_str(w.shape()));
      if (in.size() == 3 && in[2]->shape() != Shape{w.dim(0)})
        fail(kind, "bias [" + std::to_string(w.dim(0)) + "]", shape_str(in[2]->shape()));
      kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0),
                              w.dim(2), w.dim(3), attrs.stride, attrs.pad};
      g.infer_output();
      Tensor y({g.batch, g.out_channels, g.out_h, g.out_w});
      kernels::conv2d_forward(g, x.ptr(), w.ptr(), y.ptr());
      if (in.size() == 3) {
        const std::size_t plane = g.out_h * g.out_w;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += (*in[2])[(i / plane) % g.out_channels];
      }
      return y;
    }
    case OpKind::kDeconv2d: {
      expect_arity(kind, in, 2, 3);
      const Tensor& x = *in[0];
      const Tensor& w = *in[1];
      expect_rank(kind, x, 4, "input [B,C,H,W]");
      expect_rank(kind, w, 4, "weight [C,O,kh,kw]");
      if (w.dim(0) != x.dim(1))
        fail(kind, "weight with " + std::to_string(x.dim(1)) + " input channels",
             shape_str(w.shape()));
      if (in.size() == 3 && in[2]->shape() != Shape{w.dim(1)})
        fail(kind, "bias [" + std::to_string(w.dim(1)) + "]", shape_str(in[2]->shape()));
      if (attrs.stride == 0 || attrs.output_pad_h >= attrs.stride ||
          attrs.output_pad_w >= attrs.stride)
        fail(kind, "output padding below stride " + std::to_string(attrs.stride),
             std::to_string(attrs.output_pad_h) + "," + std::to_string(attrs.output_pad_w));
      auto out_dim = [&](std::size_t n, std::size_t k, std::size_t op) -> std::size_t {
        const auto v = static_cast<std::int64_t>((n - 1) * attrs.stride + k + op) -
                       static_cast<std::int64_t>(2 * attrs.pad);
        if (v <= 0) fail(kind, "positive output extent", std::to_string(v));
        return static_cast<std::size_t>(v);
      };
      // A transposed convolution is the data-gradient of the convolution that
      // maps the output geometry back onto the input.
      kernels::ConvGeometry g{x.dim(0), w.dim(1), out_dim(x.dim(2), w.dim(2), attrs.output_pad_h),
                              out_dim(x.dim(3), w.dim(3), attrs.output_pad_w), x.dim(1),
                              w.dim(2), w.dim(3), attrs.stride, attrs.pad};
      g.infer_output();
      if (g.out_h != x.dim(2) || g.out_w != x.dim(3))
        fail(kind, "invertible geometry", shape_str(x.shape()));
      Tensor y({g.batch, g.in_channels, g.in_h, g.in_w});
      kernels::conv2d_backward_data(g, x.ptr(), w.ptr(), y.ptr());
      if (in.size() == 3) {
        const std::size_t plane = g.in_h * g.in_w;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += (*in[2])[(i / plane) % g.in_channels];
      }
      return y;
    }
    case OpKind::kScaledDotProductAttention: {
      expect_arity(kind, in, 3, 3);
      const Tensor& q = *in[0];
      const Tensor& k = *in[1];
      const Tensor& v = *in[2];
      expect_rank(kind, q, 3, "query [B,T,D]");
      expect_rank(kind, k, 3, "key [B,S,D]");
      expect_rank(kind, v, 3, "value [B,S,Dv]");
      if (k.dim(0) != q.dim(0) || k.dim(2) != q.dim(2))
        fail(kind, "key [" + std::to_string(q.dim(0)) + "xSx" + std::to_string(q.dim(2)) + "]",
             shape_str(k.shape()));
      if (v.dim(0) != k.dim(0) || v.dim(1) != k.dim(1))
        fail(kind, "value [" + std::to_string(k.dim(0)) + "x" + std::to_string(k.dim(1)) + "xDv]",
             shape_str(v.shape()));
      const std::size_t B = q.dim(0), T = q.dim(1), S = k.dim(1), D = q.dim(2), Dv = v.dim(2);
      check_mask(kind, attrs, B, S);
      Tensor probs({B, T, S});
      Tensor y({B, T, Dv});
      const auto nb = static_cast<std::int64_t>(B);
#pragma omp parallel for schedule(static) if (B * T * S * D > 32768)
      for (std::int64_t b = 0; b < nb; ++b) {
        AttnView av{T, S, D, Dv,
                    q.ptr() + b * T * D, D, k.ptr() + b * S * D, D, v.ptr() + b * S * Dv, Dv,
                    attrs.key_mask.empty() ? nullptr : attrs.key_mask.data() + b * S};
        attn_forward(av, probs.ptr() + b * T * S, y.ptr() + b * T * Dv, Dv);
      }
      saved = {std::move(probs)};
      return y;
    }
    case OpKind::kMultiHeadAttention: {
      expect_arity(kind, in, 9, 9);
      const Tensor& x = *in[0];
      expect_rank(kind, x, 3, "input [B,T,E]");
      const std::size_t B = x.dim(0), T = x.dim(1), E = x.dim(2);
      const Tensor& wq = *in[1];
      expect_rank(kind, wq, 2, "query projection [E,P]");
      const std::size_t P = wq.dim(1);
      const Shape wshape{E, P}, bshape{P};
      for (std::size_t i : {1, 3, 5})
        if (in[i]->shape() != wshape) fail(kind, "projection " + shape_str(wshape), shape_str(in[i]->shape()));
      for (std::size_t i : {2, 4, 6})
        if (in[i]->shape() != bshape) fail(kind, "projection bias " + shape_str(bshape), shape_str(in[i]->shape()));
      if (in[7]->shape() != Shape{P, E})
        fail(kind, "output projection " + shape_str({P, E}), shape_str(in[7]->shape()));
      if (in[8]->shape() != Shape{E})
        fail(kind, "output bias " + shape_str({E}), shape_str(in[8]->shape()));
      if (attrs.heads == 0 || P % attrs.heads != 0)
        fail(kind, "projection width divisible by " + std::to_string(attrs.heads) + " heads",
             std::to_string(P));
      check_mask(kind, attrs, B, T);
      const std::size_t H = attrs.heads, Dh = P / H, rows = B * T;
      Tensor q = affine(x, rows, *in[1], *in[2]);
      Tensor k = affine(x, rows, *in[3], *in[4]);
      Tensor v = affine(x, rows, *in[5], *in[6]);
      Tensor probs({B, H, T, T});
      Tensor heads({rows, P});
      const auto nbh = static_cast<std::int64_t>(B * H);
#pragma omp parallel for schedule(static) if (B * H * T * T * Dh > 32768)
      for (std::int64_t bh = 0; bh < nbh; ++bh) {
        const std::size_t b = bh / H, h = bh % H;
        const std::size_t base = b * T * P + h * Dh;
        AttnView av{T, T, Dh, Dh, q.ptr() + base, P, k.ptr() + base, P, v.ptr() + base, P,
                    attrs.key_mask.empty() ? nullptr : attrs.key_mask.data() + b * T};
        attn_forward(av, probs.ptr() + bh * T * T, heads.ptr() + base, P);
      }
      Tensor y = affine(heads, rows, *in[7], *in[8]);
      saved = {std::move(q), std::move(k), std::move(v), std::move(probs), std::move(heads)};
      return y.reshaped({B, T, E});
    }
    case OpKind::kMse: {
      expect_arity(kind, in, 2, 2);
      if (in[0]->shape() != in[1]->shape())
        fail(kind, "target of shape " + shape_str(in[0]->shape()), shape_str(in[1]->shape()));
      double s = 0.0;
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        const double d = (*in[0])[i] - (*in[1])[i];
        s += d * d;
      }
      return Tensor::scalar(s / static_cast<double>(in[0]->size()));
    }
    case OpKind::kCrossEntropy: {
      expect_arity(kind, in, 1, 1);
      const Tensor& logits = *in[0];
      expect_rank(kind, logits, 2, "logits [B,K]");
      const std::size_t B = logits.dim(0), K = logits.dim(1);
      if (attrs.labels.size() != B)
        fail(kind, std::to_string(B) + " labels", std::to_string(attrs.labels.size()));
      Tensor probs(logits.shape());
      double loss = 0.0;
      for (std::size_t r = 0; r < B; ++r) {
        const int y = attrs.labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= K)
          throw ConfigError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(K) + ")");
        const double* lr = logits.ptr() + r * K;
        const double mx = *std::max_element(lr, lr + K);
        double z = 0.0;
        for (std::size_t j = 0; j < K; ++j) z += std::exp(lr[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < K; ++j) probs[r * K + j] = std::exp(lr[j] - lse);
        loss += lse - lr[y];
      }
      saved = {std::move(probs)};
      return Tensor::scalar(loss / static_cast<double>(B));
    }
    case OpKind::kExp: {
      expect_arity(kind, in, 1, 1);
      Tensor y = *in[0];
      for (auto& v : y.data()) v = std::exp(v);
      return y;
    }
    case OpKind::kSquaredDistances: {
      expect_arity(kind, in, 2, 2);
      const Tensor& x = *in[0];
      const Tensor& y = *in[1];
      expect_rank(kind, x, 2, "points [m,d]");
      expect_rank(kind, y, 2, "points [n,d]");
      if (x.dim(1) != y.dim(1))
        fail(kind, "second set with dimension " + std::to_string(x.dim(1)), shape_str(y.shape()));
      Tensor out({x.dim(0), y.dim(0)});
      kernels::squared_distances(x.dim(0), y.dim(0), x.dim(1), x.ptr(), y.ptr(), out.ptr());
      return out;
    }
    case OpKind::kMean:
    case OpKind::kSum: {
      expect_arity(kind, in, 1, 1);
      double s = 0.0;
      for (double v : in[0]->data()) s += v;
      if (kind == OpKind::kMean) s /= static_cast<double>(in[0]->size());
      return Tensor::scalar(s);
    }
    case OpKind::kScalarMul: {
      expect_arity(kind, in, 1, 1);
      Tensor y = *in[0];
      for (auto& v : y.data()) v *= attrs.scalar;
      return y;
    }
    case OpKind::kScalarAdd: {
      expect_arity(kind, in, 1, 1);
      Tensor y = *in[0];
      for (auto& v : y.data()) v += attrs.scalar;
      return y;
    }
    case OpKind::kNegate: {
      expect_arity(kind, in, 1, 1);
      Tensor y = *in[0];
      for (auto& v : y.data()) v = -v;
      return y;
    }
    case OpKind::kConstant:
    case OpKind::kParameter:
      break;
  }
  throw ShapeError(std::string(op_name(kind)) + ": not an operation");
}

// ---------------------------------------------------------------------------

void backward_rule(OpKind kind, std::span<const Tensor* const> in, const Tensor& out,
                   const Tensor& gout, const OpAttrs& attrs, const std::vector<Tensor>& saved,
                   std::span<Tensor* const> grads) {
  auto accumulate_all = [&](Tensor* g, double scale) {
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += scale * gout[i];
  };
  switch (kind) {
    case OpKind::kMatmul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      const std::size_t k = b.dim(0), n = b.dim(1), rows = a.size() / k;
      if (grads[0]) kernels::gemm_nt(rows, n, k, gout.ptr(), b.ptr(), grads[0]->ptr(), true);
      if (grads[1]) kernels::gemm_tn(k, rows, n, a.ptr(), gout.ptr(), grads[1]->ptr(), true);
      return;
    }
    case OpKind::kAdd:
      accumulate_all(grads[0], 1.0);
      accumulate_all(grads[1], 1.0);
      return;
    case OpKind::kBiasAdd: {
      accumulate_all(grads[0], 1.0);
      if (grads[1]) {
        const std::size_t n = in[1]->size();
        add_colsum(gout.ptr(), gout.size() / n, n, grads[1]->ptr());
      }
      return;
    }
    case OpKind::kRelu:
      if (grads[0])
        for (std::size_t i = 0; i < gout.size(); ++i)
          if ((*in[0])[i] > 0.0) (*grads[0])[i] += gout[i];
      return;
    case OpKind::kGelu:
      if (grads[0])
        for (std::size_t i = 0; i < gout.size(); ++i) {
          const double x = (*in[0])[i];
          const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          (*grads[0])[i] += gout[i] * (cdf + x * pdf);
        }
      return;
    case OpKind::kSoftmax: {
      if (!grads[0]) return;
      const std::size_t n = last_dim(out), rows = out.size() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = out.ptr() + r * n;
        const double* g = gout.ptr() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) (*grads[0])[r * n + j] += y[j] * (g[j] - dot);
      }
      return;
    }
    case OpKind::kLayerNorm: {
      const Tensor& xhat = saved[0];
      const Tensor& rstd = saved[1];
      const Tensor& gamma = *in[1];
      const std::size_t n = gamma.size(), rows = xhat.size() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* h = xhat.ptr() + r * n;
        const double* g = gout.ptr() + r * n;
        if (grads[1])
          for (std::size_t j = 0; j < n; ++j) (*grads[1])[j] += g[j] * h[j];
        if (grads[2])
          for (std::size_t j = 0; j < n; ++j) (*grads[2])[j] += g[j];
        if (grads[0]) {
          double mean_g = 0.0, mean_gh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double gh = g[j] * gamma[j];
            mean_g += gh;
            mean_gh += gh * h[j];
          }
          mean_g /= static_cast<double>(n);
          mean_gh /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j)
            (*grads[0])[r * n + j] += rstd[r] * (g[j] * gamma[j] - mean_g - h[j] * mean_gh);
        }
      }
      return;
    }
    case OpKind::kReshape:
      accumulate_all(grads[0], 1.0);
      return;
    case OpKind::kTranspose: {
      if (!grads[0]) return;
      const Tensor& x = *in[0];
      std::vector<std::size_t> perm = attrs.dims.empty() ? std::vector<std::size_t>{1, 0} : attrs.dims;
      const auto in_st = strides_of(x.shape());
      const Shape& os = out.shape();
      std::vector<std::size_t> idx(os.size(), 0);
      for (std::size_t o = 0; o < gout.size(); ++o) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) src += idx[i] * in_st[perm[i]];
        (*grads[0])[src] += gout[o];
        for (std::size_t i = idx.size(); i-- > 0;) {
          if (++idx[i] < os[i]) break;
          idx[i] = 0;
        }
      }
      return;
    }
    case OpKind::kConcat: {
      const auto sp = split_at(out.shape(), attrs.axis);
      std::size_t offset = 0;
      for (std::size_t t = 0; t < in.size(); ++t) {
        const std::size_t ext = in[t]->dim(attrs.axis);
        if (grads[t]) {
          const std::size_t chunk = ext * sp.inner;
          for (std::size_t o = 0; o < sp.outer; ++o) {
            const double* src = gout.ptr() + o * sp.extent * sp.inner + offset * sp.inner;
            double* dst = grads[t]->ptr() + o * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
        offset += ext;
      }
      return;
    }
    case OpKind::kSlice: {
      if (!grads[0]) return;
      const auto sp = split_at(in[0]->shape(), attrs.axis);
      const std::size_t chunk = (attrs.end - attrs.begin) * sp.inner;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        double* dst = grads[0]->ptr() + (o * sp.extent + attrs.begin) * sp.inner;
        const double* src = gout.ptr() + o * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
      return;
    }
    case OpKind::kReverseAxis: {
      if (!grads[0]) return;
      const auto sp = split_at(in[0]->shape(), attrs.axis);
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.extent; ++i) {
          double* dst = grads[0]->ptr() + (o * sp.extent + i) * sp.inner;
          const double* src = gout.ptr() + (o * sp.extent + sp.extent - 1 - i) * sp.inner;
          for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
        }
      return;
    }
    case OpKind::kConv2d: {
      const Tensor& x = *in[0];
      const Tensor& w = *in[1];
      kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0),
                              w.dim(2), w.dim(3), attrs.stride, attrs.pad};
      g.infer_output();
      if (grads[0]) kernels::conv2d_backward_data(g, gout.ptr(), w.ptr(), grads[0]->ptr());
      if (grads[1]) kernels::conv2d_backward_filter(g, x.ptr(), gout.ptr(), grads[1]->ptr());
      if (in.size() == 3 && grads[2]) {
        const std::size_t plane = g.out_h * g.out_w;
        for (std::size_t i = 0; i < gout.size(); ++i)
          (*grads[2])[(i / plane) % g.out_channels] += gout[i];
      }
      return;
    }
    case OpKind::kDeconv2d: {
      const Tensor& x = *in[0];
      const Tensor& w = *in[1];
      kernels::ConvGeometry g{x.dim(0), w.dim(1), out.dim(2), out.dim(3), x.dim(1),
                              w.dim(2), w.dim(3), attrs.stride, attrs.pad};
      g.infer_output();
      if (grads[0]) {
        Tensor tmp(x.shape());
        kernels::conv2d_forward(g, gout.ptr(), w.ptr(), tmp.ptr());
        for (std::size_t i = 0; i < tmp.size(); ++i) (*grads[0])[i] += tmp[i];
      }
      if (grads[1]) kernels::conv2d_backward_filter(g, gout.ptr(), x.ptr(), grads[1]->ptr());
      if (in.size() == 3 && grads[2]) {
        const std::size_t plane = g.in_h * g.in_w;
        for (std::size_t i = 0; i < gout.size(); ++i)
          (*grads[2])[(i / plane) % g.in_channels] += gout[i];
      }
      return;
    }
    case OpKind::kScaledDotProductAttention: {
      const Tensor& q = *in[0];
      const Tensor& k = *in[1];
      const Tensor& v = *in[2];
      const std::size_t B = q.dim(0), T = q.dim(1), S = k.dim(1), D = q.dim(2), Dv = v.dim(2);
      const auto nb = static_cast<std::int64_t>(B);
#pragma omp parallel for schedule(static) if (B * T * S * D > 32768)
      for (std::int64_t b = 0; b < nb; ++b) {
        AttnView av{T, S, D, Dv,
                    q.ptr() + b * T * D, D, k.ptr() + b * S * D, D, v.ptr() + b * S * Dv, Dv,
                    attrs.key_mask.empty() ? nullptr : attrs.key_mask.data() + b * S};
        attn_backward(av, saved[0].ptr() + b * T * S, gout.ptr() + b * T * Dv, Dv,
                      grads[0] ? grads[0]->ptr() + b * T * D : nullptr,
                      grads[1] ? grads[1]->ptr() + b * S * D : nullptr,
                      grads[2] ? grads[2]->ptr() + b * S * Dv : nullptr);
      }
      return;
    }
    case OpKind::kMultiHeadAttention: {
      const Tensor& x = *in[0];
      const std::size_t B = x.dim(0), T = x.dim(1), E = x.dim(2);
      const std::size_t P = in[1]->dim(1), H = attrs.heads, Dh = P / H, rows = B * T;
      const Tensor& q = saved[0];
      const Tensor& k = saved[1];
      const Tensor& v = saved[2];
      const Tensor& probs = saved[3];
      const Tensor& heads = saved[4];
      // Output projection.
      if (grads[7]) kernels::gemm_tn(P, rows, E, heads.ptr(), gout.ptr(), grads[7]->ptr(), true);
      if (grads[8]) add_colsum(gout.ptr(), rows, E, grads[8]->ptr());
      const bool need_inner = grads[0] || grads[1] || grads[2] || grads[3] || grads[4] ||
                              grads[5] || grads[6];
      if (!need_inner) return;
      Tensor gheads({rows, P});
      kernels::gemm_nt(rows, E, P, gout.ptr(), in[7]->ptr(), gheads.ptr(), false);
      Tensor gq({rows, P}), gk({rows, P}), gv({rows, P});
      const auto nbh = static_cast<std::int64_t>(B * H);
#pragma omp parallel for schedule(static) if (B * H * T * T * Dh > 32768)
      for (std::int64_t bh = 0; bh < nbh; ++bh) {
        const std::size_t b = bh / H, h = bh % H;
        const std::size_t base = b * T * P + h * Dh;
        AttnView av{T, T, Dh, Dh, q.ptr() + base, P, k.ptr() + base, P, v.ptr() + base, P,
                    attrs.key_mask.empty() ? nullptr : attrs.key_mask.data() + b * T};
        attn_backward(av, probs.ptr() + bh * T * T, gheads.ptr() + base, P, gq.ptr() + base,
                      gk.ptr() + base, gv.ptr() + base);
      }
      const Tensor* proj_grads[3] = {&gq, &gk, &gv};
      for (std::size_t p = 0; p < 3; ++p) {
        const Tensor& gp = *proj_grads[p];
        const std::size_t wi = 1 + 2 * p;
        if (grads[wi]) kernels::gemm_tn(E, rows, P, x.ptr(), gp.ptr(), grads[wi]->ptr(), true);
        if (grads[wi + 1]) add_colsum(gp.ptr(), rows, P, grads[wi + 1]->ptr());
        if (grads[0]) kernels::gemm_nt(rows, P, E, gp.ptr(), in[wi]->ptr(), grads[0]->ptr(), true);
      }
      return;
    }
    case OpKind::kMse: {
      const double g = gout.item() * 2.0 / static_cast<double>(in[0]->size());
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        const double d = (*in[0])[i] - (*in[1])[i];
        if (grads[0]) (*grads[0])[i] += g * d;
        if (grads[1]) (*grads[1])[i] -= g * d;
      }
      return;
    }
    case OpKind::kCrossEntropy: {
      if (!grads[0]) return;
      const Tensor& probs = saved[0];
      const std::size_t B = probs.dim(0), K = probs.dim(1);
      const double g = gout.item() / static_cast<double>(B);
      for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < K; ++j) {
          const double target = static_cast<int>(j) == attrs.labels[r] ? 1.0 : 0.0;
          (*grads[0])[r * K + j] += g * (probs[r * K + j] - target);
        }
      return;
    }
    case OpKind::kExp:
      if (grads[0])
        for (std::size_t i = 0; i < gout.size(); ++i) (*grads[0])[i] += gout[i] * out[i];
      return;
    case OpKind::kSquaredDistances: {
      const Tensor& x = *in[0];
      const Tensor& y = *in[1];
      const std::size_t m = x.dim(0), n = y.dim(0), d = x.dim(1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = 2.0 * gout[i * n + j];
          if (g == 0.0) continue;
          for (std::size_t c = 0; c < d; ++c) {
            const double diff = x[i * d + c] - y[j * d + c];
            if (grads[0]) (*grads[0])[i * d + c] += g * diff;
            if (grads[1]) (*grads[1])[j * d + c] -= g * diff;
          }
        }
      return;
    }
    case OpKind::kMean:
    case OpKind::kSum: {
      if (!grads[0]) return;
      double g = gout.item();
      if (kind == OpKind::kMean) g /= static_cast<double>(in[0]->size());
      for (auto& v : grads[0]->data()) v += g;
      return;
    }
    case OpKind::kScalarMul:
      accumulate_all(grads[0], attrs.scalar);
      return;
    case OpKind::kScalarAdd:
      accumulate_all(grads[0], 1.0);
      return;
    case OpKind::kNegate:
      accumulate_all(grads[0], -1.0);
      return;
    case OpKind::kConstant:
    case OpKind::kParameter:
      return;
  }
}

}  // namespace xmodal::detail

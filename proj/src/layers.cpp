// src/layers.cpp

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

#include "xmodal/layers.hpp"

#include <cmath>

#include "xmodal/error.hpp"

namespace xmodal {

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (find(name)) throw ConfigError("parameter '" + name + "' registered twice");
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter* ParameterSet::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParameterSet::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Tensor xavier_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = uniform(rng, -a, a);
  return t;
}

Tensor sinusoidal_positions(std::size_t steps, std::size_t width) {
  Tensor t({steps, width});
  for (std::size_t pos = 0; pos < steps; ++pos)
    for (std::size_t i = 0; i < width; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * rate;
      t[pos * width + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return t;
}

namespace nn {

Linear Linear::make(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                    Rng& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = &ps.add(name + ".weight", xavier_uniform(rng, {in, out}, in, out));
  l.bias = &ps.add(name + ".bias", Tensor({out}));
  return l;
}

Var Linear::operator()(Graph& g, Var x) const {
  return ops::bias_add(ops::matmul(x, g.param(*weight)), g.param(*bias));
}

LayerNorm LayerNorm::make(ParameterSet& ps, const std::string& name, std::size_t width) {
  LayerNorm ln;
  ln.gamma = &ps.add(name + ".gamma", Tensor::full({width}, 1.0));
  ln.beta = &ps.add(name + ".beta", Tensor({width}));
  return ln;
}

Var LayerNorm::operator()(Graph& g, Var x) const {
  return ops::layer_norm(x, g.param(*gamma), g.param(*beta));
}

Conv2d Conv2d::make(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                    std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng) {
  Conv2d c;
  c.stride = stride;
  c.pad = pad;
  const std::size_t area = kernel * kernel;
  c.weight = &ps.add(name + ".weight",
                     xavier_uniform(rng, {out, in, kernel, kernel}, in * area, out * area));
  c.bias = &ps.add(name + ".bias", Tensor({out}));
  return c;
}

Var Conv2d::operator()(Graph& g, Var x) const {
  return ops::conv2d(x, g.param(*weight), g.param(*bias), stride, pad);
}

Deconv2d Deconv2d::make(ParameterSet& ps, const std::string& name, std::size_t in,
                        std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad,
                        Rng& rng) {
  Deconv2d d;
  d.stride = stride;
  d.pad = pad;
  const std::size_t area = kernel * kernel;
  d.weight = &ps.add(name + ".weight",
                     xavier_uniform(rng, {in, out, kernel, kernel}, in * area, out * area));
  d.bias = &ps.add(name + ".bias", Tensor({out}));
  return d;
}

Var Deconv2d::operator()(Graph& g, Var x) const {
  return ops::deconv2d(x, g.param(*weight), g.param(*bias), stride, pad, output_pad_h,
                       output_pad_w);
}

TransformerBlock TransformerBlock::make(ParameterSet& ps, const std::string& name,
                                        std::size_t width, std::size_t heads, Rng& rng) {
  if (heads == 0 || heads > width)
    throw ConfigError("transformer: " + std::to_string(heads) + " heads for width " +
                      std::to_string(width));
  const std::size_t proj = heads * (width / heads);
  TransformerBlock b;
  b.heads = heads;
  b.q = Linear::make(ps, name + ".attn.q", width, proj, rng);
  b.k = Linear::make(ps, name + ".attn.k", width, proj, rng);
  b.v = Linear::make(ps, name + ".attn.v", width, proj, rng);
  b.o = Linear::make(ps, name + ".attn.o", proj, width, rng);
  b.ln1 = LayerNorm::make(ps, name + ".ln1", width);
  b.ff1 = Linear::make(ps, name + ".ff1", width, 4 * width, rng);
  b.ff2 = Linear::make(ps, name + ".ff2", 4 * width, width, rng);
  b.ln2 = LayerNorm::make(ps, name + ".ln2", width);
  return b;
}

Var TransformerBlock::operator()(Graph& g, Var x, const std::vector<std::uint8_t>& key_mask) const {
  Var attn = ops::multi_head_attention(x, g.param(*q.weight), g.param(*q.bias), g.param(*k.weight),
                                       g.param(*k.bias), g.param(*v.weight), g.param(*v.bias),
                                       g.param(*o.weight), g.param(*o.bias), heads, key_mask);
  Var h = ln1(g, ops::add(x, attn));
  Var ff = ff2(g, ops::gelu(ff1(g, h)));
  return ln2(g, ops::add(h, ff));
}

Mlp Mlp::make(ParameterSet& ps, const std::string& name, const std::vector<std::size_t>& widths,
              bool relu_last, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("mlp '" + name + "': need at least two widths");
  Mlp m;
  m.relu_last = relu_last;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    m.layers.push_back(
        Linear::make(ps, name + "." + std::to_string(i), widths[i], widths[i + 1], rng));
  return m;
}

Var Mlp::operator()(Graph& g, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](g, x);
    if (i + 1 < layers.size() || relu_last) x = ops::relu(x);
  }
  return x;
}

}  // namespace nn
}  // namespace xmodal

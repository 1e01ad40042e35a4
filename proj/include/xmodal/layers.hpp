// include/xmodal/layers.hpp

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

// Parameter ownership and the small layer set the auto-encoders and the
// classifier are assembled from. Layers hold non-owning pointers into a
// ParameterSet, which keeps parameters at stable addresses.

#pragma once

#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "xmodal/autodiff.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  /// Throws ConfigError on a duplicate name.
  Parameter& add(std::string name, Tensor value);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out);

/// Sinusoidal position codes [steps, width].
Tensor sinusoidal_positions(std::size_t steps, std::size_t width);

namespace nn {

struct Linear {
  Parameter* weight = nullptr;  // [in, out]
  Parameter* bias = nullptr;    // [out]
  std::size_t in = 0, out = 0;

  static Linear make(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                     Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm make(ParameterSet& ps, const std::string& name, std::size_t width);
  Var operator()(Graph& g, Var x) const;
};

struct Conv2d {
  Parameter* weight = nullptr;  // [out, in, k, k]
  Parameter* bias = nullptr;
  std::size_t stride = 1, pad = 0;

  static Conv2d make(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

struct Deconv2d {
  Parameter* weight = nullptr;  // [in, out, k, k]
  Parameter* bias = nullptr;
  std::size_t stride = 1, pad = 0, output_pad_h = 0, output_pad_w = 0;

  static Deconv2d make(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

/// Post-norm self-attention block: h = LN(x + MHA(x)); y = LN(h + FFN(h))
/// with a GELU feed-forward of width 4e. The attention projection width is
/// heads * floor(e / heads).
struct TransformerBlock {
  Linear q, k, v, o, ff1, ff2;
  LayerNorm ln1, ln2;
  std::size_t heads = 1;

  static TransformerBlock make(ParameterSet& ps, const std::string& name, std::size_t width,
                               std::size_t heads, Rng& rng);
  /// x [B,T,e]; key_mask is empty or B*T entries.
  Var operator()(Graph& g, Var x, const std::vector<std::uint8_t>& key_mask = {}) const;
};

/// Linear layers with ReLU between them. When relu_last is set the final
/// layer is followed by ReLU as well.
struct Mlp {
  std::vector<Linear> layers;
  bool relu_last = false;

  static Mlp make(ParameterSet& ps, const std::string& name, const std::vector<std::size_t>& widths,
                  bool relu_last, Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

}  // namespace nn
}  // namespace xmodal

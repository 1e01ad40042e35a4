// include/xmodal/autodiff.hpp

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

// Tape-based reverse-mode automatic differentiation.
//
// A Graph records every operation applied during one forward pass as a node
// holding its output value and whatever intermediates its backward rule
// needs. Nodes are appended in execution order, so the tape is already
// topologically sorted and backward() walks it once in reverse.
//
//   Graph g;
//   Var x = g.constant(batch);
//   Var h = ops::relu(ops::bias_add(ops::matmul(x, g.param(w)), g.param(b)));
//   Var loss = ops::mse(h, g.constant(target));
//   g.backward(loss);   // accumulates into w.grad and b.grad

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xmodal/tensor.hpp"

namespace xmodal {

/// Trainable tensor with its gradient and Adam moment accumulators.
/// grad always matches value's shape; the moments are allocated on the
/// first optimizer step and then match as well.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;

  void zero_grad() { grad.fill(0.0); }
  bool has_moments() const { return adam_m.shape() == value.shape(); }
};

enum class OpKind : std::uint8_t {
  kConstant,
  kParameter,
  kMatmul,
  kAdd,
  kBiasAdd,
  kRelu,
  kGelu,
  kSoftmax,
  kLayerNorm,
  kReshape,
  kTranspose,
  kConcat,
  kSlice,
  kReverseAxis,
  kConv2d,
  kDeconv2d,
  kScaledDotProductAttention,
  kMultiHeadAttention,
  kMse,
  kCrossEntropy,
  kExp,
  kSquaredDistances,
  kMean,
  kSum,
  kScalarMul,
  kScalarAdd,
  kNegate,
};

std::string_view op_name(OpKind kind);

/// Attributes for the ops that take them; unused fields are ignored.
struct OpAttrs {
  std::size_t axis = 0;
  std::vector<std::size_t> dims;  // reshape target or transpose permutation
  std::size_t begin = 0, end = 0;  // slice range [begin, end)
  std::size_t stride = 1, pad = 0;
  std::size_t output_pad_h = 0, output_pad_w = 0;  // deconv2d
  std::size_t heads = 1;
  double scalar = 0.0;
  std::vector<int> labels;               // cross_entropy class indices
  std::vector<std::uint8_t> key_mask;    // attention: batch x keys, 1 = attend
  double eps = 1e-5;                     // layer_norm
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives,
/// and so are the references value() returns.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf bound to a parameter; backward() accumulates into p.grad. The
  /// parameter must outlive the graph and stay unmodified until backward.
  Var param(Parameter& p);

  /// Runs the forward rule of `kind`, appends a node and returns it. Throws
  /// ShapeError on non-conforming inputs and NumericError when the output is
  /// not finite.
  Var apply(OpKind kind, std::span<const Var> inputs, OpAttrs attrs = {});

  /// Reverse sweep from a scalar node. Gradients are accumulated into the
  /// bound parameters; node gradients stay queryable through grad().
  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  /// Gradient of the last backward() loss w.r.t. node `id`, or nullptr when
  /// the node did not receive one.
  const Tensor* grad(std::size_t id) const;

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }

  /// Negative-control hook: backward() negates every gradient produced by
  /// ops of this kind. Used to prove the gradient checker catches bugs.
  void inject_sign_flip(OpKind kind) { sign_flip_ = kind; }

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<std::size_t> inputs;
    Tensor value;
    const Tensor* external = nullptr;  // parameter leaves read in place
    Parameter* param = nullptr;
    OpAttrs attrs;
    std::vector<Tensor> saved;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // stable addresses: Var::value() hands out references
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
  std::optional<OpKind> sign_flip_;
};

/// Typed front ends for Graph::apply.
namespace ops {
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var bias_add(Var x, Var bias);
Var relu(Var x);
Var gelu(Var x);
Var softmax(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var reshape(Var x, Shape shape);
Var transpose(Var x, std::vector<std::size_t> perm = {});
Var concat(std::span<const Var> xs, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reverse_along_axis(Var x, std::size_t axis);
Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad);
Var deconv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad,
             std::size_t output_pad_h = 0, std::size_t output_pad_w = 0);
Var scaled_dot_product_attention(Var q, Var k, Var v, std::vector<std::uint8_t> key_mask = {});
/// Fused multi-head self-attention over x [B,T,E]. Projections map E to P
/// (P divisible by heads) and the output projection maps P back to E.
Var multi_head_attention(Var x, Var wq, Var bq, Var wk, Var bk, Var wv, Var bv, Var wo, Var bo,
                         std::size_t heads, std::vector<std::uint8_t> key_mask = {});
Var mse(Var prediction, Var target);
Var cross_entropy(Var logits, std::vector<int> labels);
Var exp(Var x);
Var squared_distances(Var x, Var y);
Var mean(Var x);
Var sum(Var x);
Var scalar_mul(Var x, double c);
Var scalar_add(Var x, double c);
Var negate(Var x);
}  // namespace ops

/// Builds a scalar loss from the current parameter values. Called repeatedly
/// by grad_check with perturbed parameters.
using LossBuilder = std::function<Var(Graph&)>;

/// Max over entries of `p` of |analytic - central difference| /
/// max(1, |central difference|). Leaves p.value unchanged and p.grad holding
/// the analytic gradient.
double grad_check(const LossBuilder& build, Parameter& p, double epsilon);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. The step counter lives in the optimizer; the
/// moments live in each Parameter.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  void step(std::span<Parameter* const> params);
  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
};

}  // namespace xmodal

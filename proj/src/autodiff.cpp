// src/autodiff.cpp

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

#include "xmodal/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "op_rules.hpp"
#include "xmodal/error.hpp"

namespace xmodal {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kBiasAdd: return "bias_add";
    case OpKind::kRelu: return "relu";
    case OpKind::kGelu: return "gelu";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kReverseAxis: return "reverse_along_axis";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kDeconv2d: return "deconv2d";
    case OpKind::kScaledDotProductAttention: return "scaled_dot_product_attention";
    case OpKind::kMultiHeadAttention: return "multi_head_attention";
    case OpKind::kMse: return "mse";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kExp: return "exp";
    case OpKind::kSquaredDistances: return "squared_euclidean_distance_matrix";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kScalarAdd: return "scalar_add";
    case OpKind::kNegate: return "negate";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!graph) throw ShapeError("var: not bound to a graph");
  return graph->value(id);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  if (!n.value.all_finite()) throw NumericError("constant: non-finite value");
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  Node n;
  n.kind = OpKind::kParameter;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::apply(OpKind kind, std::span<const Var> inputs, OpAttrs attrs) {
  std::vector<const Tensor*> in;
  std::vector<std::size_t> ids;
  in.reserve(inputs.size());
  bool requires_grad = false;
  for (const Var& v : inputs) {
    if (v.graph != this)
      throw ShapeError(std::string(op_name(kind)) + ": input belongs to another graph");
    in.push_back(&value(v.id));
    ids.push_back(v.id);
    requires_grad = requires_grad || nodes_[v.id].requires_grad;
  }
  std::vector<Tensor> saved;
  Tensor out = detail::forward_rule(kind, in, attrs, saved);
  if (!out.all_finite())
    throw NumericError(std::string(op_name(kind)) + ": non-finite output");
  Node n;
  n.kind = kind;
  n.inputs = std::move(ids);
  n.value = std::move(out);
  n.attrs = std::move(attrs);
  n.saved = std::move(saved);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.value;
}

const Tensor* Graph::grad(std::size_t id) const {
  if (id >= has_grad_.size() || !has_grad_[id]) return nullptr;
  return &grads_[id];
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ShapeError("backward: loss belongs to another graph");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1)
    throw ShapeError("backward: expected scalar loss, got " + shape_str(lv.shape()));
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), false);
  grads_[loss.id] = Tensor::full(lv.shape(), 1.0);
  has_grad_[loss.id] = true;

  std::vector<const Tensor*> in;
  std::vector<Tensor*> gin;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (!has_grad_[id]) continue;
    Node& n = nodes_[id];
    if (n.kind == OpKind::kParameter) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += grads_[id][i];
      continue;
    }
    if (n.inputs.empty()) continue;
    in.clear();
    gin.clear();
    for (std::size_t src : n.inputs) {
      in.push_back(&value(src));
      if (nodes_[src].requires_grad) {
        if (!has_grad_[src]) {
          grads_[src] = Tensor(value(src).shape());
          has_grad_[src] = true;
        }
        gin.push_back(&grads_[src]);
      } else {
        gin.push_back(nullptr);
      }
    }
    if (sign_flip_ && *sign_flip_ == n.kind) {
      Tensor flipped = grads_[id];
      for (auto& v : flipped.data()) v = -v;
      detail::backward_rule(n.kind, in, value(id), flipped, n.attrs, n.saved, gin);
    } else {
      detail::backward_rule(n.kind, in, value(id), grads_[id], n.attrs, n.saved, gin);
    }
  }
}

// ---------------------------------------------------------------------------

namespace ops {
namespace {
Var unary(OpKind kind, Var x, OpAttrs attrs = {}) {
  const Var in[] = {x};
  return x.graph->apply(kind, in, std::move(attrs));
}
Var binary(OpKind kind, Var a, Var b, OpAttrs attrs = {}) {
  const Var in[] = {a, b};
  return a.graph->apply(kind, in, std::move(attrs));
}
}  // namespace

Var matmul(Var a, Var b) { return binary(OpKind::kMatmul, a, b); }
Var add(Var a, Var b) { return binary(OpKind::kAdd, a, b); }
Var bias_add(Var x, Var bias) { return binary(OpKind::kBiasAdd, x, bias); }
Var relu(Var x) { return unary(OpKind::kRelu, x); }
Var gelu(Var x) { return unary(OpKind::kGelu, x); }
Var softmax(Var x) { return unary(OpKind::kSoftmax, x); }

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  OpAttrs attrs;
  attrs.eps = eps;
  const Var in[] = {x, gamma, beta};
  return x.graph->apply(OpKind::kLayerNorm, in, std::move(attrs));
}

Var reshape(Var x, Shape shape) {
  OpAttrs attrs;
  attrs.dims = std::move(shape);
  return unary(OpKind::kReshape, x, std::move(attrs));
}

Var transpose(Var x, std::vector<std::size_t> perm) {
  OpAttrs attrs;
  attrs.dims = std::move(perm);
  return unary(OpKind::kTranspose, x, std::move(attrs));
}

Var concat(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: expected at least one input, got none");
  OpAttrs attrs;
  attrs.axis = axis;
  return xs.front().graph->apply(OpKind::kConcat, xs, std::move(attrs));
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  OpAttrs attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = end;
  return unary(OpKind::kSlice, x, std::move(attrs));
}

Var reverse_along_axis(Var x, std::size_t axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return unary(OpKind::kReverseAxis, x, std::move(attrs));
}

Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad) {
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  const Var in[] = {x, weight, bias};
  return x.graph->apply(OpKind::kConv2d, in, std::move(attrs));
}

Var deconv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad,
             std::size_t output_pad_h, std::size_t output_pad_w) {
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  attrs.output_pad_h = output_pad_h;
  attrs.output_pad_w = output_pad_w;
  const Var in[] = {x, weight, bias};
  return x.graph->apply(OpKind::kDeconv2d, in, std::move(attrs));
}

Var scaled_dot_product_attention(Var q, Var k, Var v, std::vector<std::uint8_t> key_mask) {
  OpAttrs attrs;
  attrs.key_mask = std::move(key_mask);
  const Var in[] = {q, k, v};
  return q.graph->apply(OpKind::kScaledDotProductAttention, in, std::move(attrs));
}

Var multi_head_attention(Var x, Var wq, Var bq, Var wk, Var bk, Var wv, Var bv, Var wo, Var bo,
                         std::size_t heads, std::vector<std::uint8_t> key_mask) {
  OpAttrs attrs;
  attrs.heads = heads;
  attrs.key_mask = std::move(key_mask);
  const Var in[] = {x, wq, bq, wk, bk, wv, bv, wo, bo};
  return x.graph->apply(OpKind::kMultiHeadAttention, in, std::move(attrs));
}

Var mse(Var prediction, Var target) { return binary(OpKind::kMse, prediction, target); }

Var cross_entropy(Var logits, std::vector<int> labels) {
  OpAttrs attrs;
  attrs.labels = std::move(labels);
  return unary(OpKind::kCrossEntropy, logits, std::move(attrs));
}

Var exp(Var x) { return unary(OpKind::kExp, x); }
Var squared_distances(Var x, Var y) { return binary(OpKind::kSquaredDistances, x, y); }
Var mean(Var x) { return unary(OpKind::kMean, x); }
Var sum(Var x) { return unary(OpKind::kSum, x); }

Var scalar_mul(Var x, double c) {
  OpAttrs attrs;
  attrs.scalar = c;
  return unary(OpKind::kScalarMul, x, std::move(attrs));
}

Var scalar_add(Var x, double c) {
  OpAttrs attrs;
  attrs.scalar = c;
  return unary(OpKind::kScalarAdd, x, std::move(attrs));
}

Var negate(Var x) { return unary(OpKind::kNegate, x); }

}  // namespace ops

// ---------------------------------------------------------------------------

double grad_check(const LossBuilder& build, Parameter& p, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("grad_check: epsilon must be positive");
  auto evaluate = [&]() {
    Graph g;
    Var loss = build(g);
    if (loss.value().size() != 1)
      throw ShapeError("grad_check: expected scalar loss, got " + shape_str(loss.shape()));
    const double v = loss.item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite perturbation result");
    return v;
  };

  p.zero_grad();
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss);
  }
  const Tensor analytic = p.grad;

  double worst = 0.0;
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double orig = p.value[i];
    p.value[i] = orig + epsilon;
    double up;
    try {
      up = evaluate();
    } catch (...) {
      p.value[i] = orig;
      throw;
    }
    p.value[i] = orig - epsilon;
    double down;
    try {
      down = evaluate();
    } catch (...) {
      p.value[i] = orig;
      throw;
    }
    p.value[i] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  p.grad = analytic;
  return worst;
}

void Adam::step(std::span<Parameter* const> params) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (Parameter* p : params) {
    if (!p->has_moments()) {
      p->adam_m = Tensor(p->value.shape());
      p->adam_v = Tensor(p->value.shape());
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      double& m = p->adam_m[i];
      double& v = p->adam_v[i];
      m = config_.beta1 * m + (1.0 - config_.beta1) * g;
      v = config_.beta2 * v + (1.0 - config_.beta2) * g * g;
      const double mhat = m / c1;
      const double vhat = v / c2;
      p->value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
    if (!p->value.all_finite()) throw NumericError("adam: non-finite value in " + p->name);
  }
}

}  // namespace xmodal

// tests/test_autodiff.cpp

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
#include <set>
#include <string>

#include "xmodal/autodiff.hpp"
#include "xmodal/error.hpp"
#include "xmodal/gradcheck_suite.hpp"
#include "xmodal/rng.hpp"

using namespace xmodal;

namespace {

Tensor random(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng, 0.0, scale);
  return t;
}

double sq_norm(const Tensor& t) {
  double s = 0;
  for (double v : t.data()) s += v * v;
  return s;
}

// Direct cross-correlation, written independently of the library kernels.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t s, std::size_t p) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (H + 2 * p - kh) / s + 1, ow = (W + 2 * p - kw) / s + 1;
  Tensor y({B, O, oh, ow});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i * s + u) - static_cast<long>(p);
                const long q = static_cast<long>(j * s + v) - static_cast<long>(p);
                if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                acc += x[((n * C + c) * H + r) * W + q] * w[((o * C + c) * kh + u) * kw + v];
              }
          y[((n * O + o) * oh + i) * ow + j] = acc;
        }
  return y;
}

struct ConvSpec {
  std::size_t out_channels, kernel, stride, pad;
};

}  // namespace

TEST_CASE("matmul by the identity returns the operand") {
  Graph g;
  Rng rng = make_rng(1, "id");
  Tensor a = random(rng, {3, 5});
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  CHECK(ops::matmul(g.constant(eye), g.constant(a)).value() == a);
}

TEST_CASE("softmax of equal logits is uniform; rows sum to one") {
  Graph g;
  Var s = ops::softmax(g.constant(Tensor::from({3}, {0, 0, 0})));
  for (double v : s.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Rng rng = make_rng(2, "softmax");
  for (int trial = 0; trial < 20; ++trial) {
    Var p = ops::softmax(g.constant(random(rng, {4, 7}, 10.0)));
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0;
      for (std::size_t k = 0; k < 7; ++k) {
        CHECK(p.value()[r * 7 + k] > 0.0);
        sum += p.value()[r * 7 + k];
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("reverse along an axis twice is the identity") {
  Graph g;
  Rng rng = make_rng(3, "rev");
  Tensor x = random(rng, {2, 5, 3});
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Var r = ops::reverse_along_axis(g.constant(x), axis);
    CHECK_FALSE(r.value() == x);
    CHECK(ops::reverse_along_axis(r, axis).value() == x);
  }
  Var r = ops::reverse_along_axis(g.constant(Tensor::from({3, 1}, {1, 2, 3})), 0);
  CHECK(r.value() == Tensor::from({3, 1}, {3, 2, 1}));
}

TEST_CASE("concat backward splits the upstream gradient exactly") {
  Rng rng = make_rng(4, "concat");
  Parameter a("a", random(rng, {2, 3})), b("b", random(rng, {2, 4}));
  Graph g;
  const Var parts[] = {g.param(a), g.param(b)};
  Var c = ops::concat(parts, 1);
  Tensor target = random(rng, {2, 7});
  g.backward(ops::mse(c, g.constant(target)));
  const Tensor& up = *g.grad(c.id);
  CHECK(sq_norm(a.grad) + sq_norm(b.grad) == doctest::Approx(sq_norm(up)).epsilon(1e-14));
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(a.grad[r * 3 + j] == up[r * 7 + j]);
    for (std::size_t j = 0; j < 4; ++j) CHECK(b.grad[r * 4 + j] == up[r * 7 + 3 + j]);
  }
}

TEST_CASE("conv2d forward matches a direct loop") {
  Rng rng = make_rng(5, "conv");
  Tensor x = random(rng, {2, 3, 9, 11}), w = random(rng, {4, 3, 3, 2}), b = random(rng, {4});
  Graph g;
  Var y = ops::conv2d(g.constant(x), g.constant(w), g.constant(b), 2, 1);
  CHECK(max_abs_diff(y.value(), naive_conv(x, w, b, 2, 1)) <= 1e-12);
}

TEST_CASE("visual and lexical conv stacks produce the architecture shapes") {
  auto run = [](Shape input, std::initializer_list<ConvSpec> stack) {
    Rng rng = make_rng(6, "shapes");
    Graph g;
    Var h = g.constant(random(rng, input, 0.1));
    std::vector<Shape> shapes;
    std::vector<std::pair<ConvSpec, Shape>> trace;
    for (const auto& s : stack) {
      const std::size_t c = h.shape()[1];
      trace.push_back({s, h.shape()});
      h = ops::conv2d(h, g.constant(random(rng, {s.out_channels, c, s.kernel, s.kernel}, 0.1)),
                      g.constant(Tensor({s.out_channels})), s.stride, s.pad);
      shapes.push_back(h.shape());
    }
    // Mirror back with transposed convolutions.
    for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
      const auto& [s, in_shape] = *it;
      const std::size_t c = h.shape()[1];
      h = ops::deconv2d(h, g.constant(random(rng, {c, in_shape[1], s.kernel, s.kernel}, 0.1)),
                        g.constant(Tensor({in_shape[1]})), s.stride, s.pad);
      CHECK(h.shape() == in_shape);
    }
    return shapes;
  };
  auto visual = run({1, 1, 18, 342}, {{16, 4, 2, 1}, {64, 5, 2, 1}, {32, 3, 3, 1}});
  CHECK(visual[0] == Shape{1, 16, 9, 171});
  CHECK(visual[1] == Shape{1, 64, 4, 85});
  CHECK(visual[2] == Shape{1, 32, 2, 29});
  CHECK(numel(visual[2]) == 1856);

  auto lexical = run({1, 1, 22, 1024}, {{64, 4, 2, 1}, {4, 4, 3, 1}});
  CHECK(lexical[0] == Shape{1, 64, 11, 512});
  CHECK(lexical[1] == Shape{1, 4, 4, 171});
  CHECK(numel(lexical[1]) == 2736);
}

TEST_CASE("backward of sum gives all ones; mean-mse gives 2x/n") {
  Parameter w("w", Tensor::from({2, 3}, {1, -2, 3, 0.5, 7, -1}));
  {
    Graph g;
    g.backward(ops::sum(g.param(w)));
    CHECK(w.grad == Tensor::full({2, 3}, 1.0));
  }
  Parameter x("x", Tensor::from({2}, {1, 2}));
  Graph g;
  g.backward(ops::mse(g.param(x), g.constant(Tensor({2}))));
  CHECK(x.grad[0] == doctest::Approx(1.0));
  CHECK(x.grad[1] == doctest::Approx(2.0));
}

TEST_CASE("unreachable parameters keep a zero gradient; gradients accumulate") {
  Parameter used("u", Tensor::from({2}, {1, 2})), unused("n", Tensor::from({2}, {3, 4}));
  Graph g;
  g.param(unused);
  Var loss = ops::sum(g.param(used));
  g.backward(loss);
  CHECK(unused.grad == Tensor({2}));
  Graph g2;
  g2.backward(ops::sum(g2.param(used)));
  CHECK(used.grad == Tensor::full({2}, 2.0));
}

TEST_CASE("backward rejects a non-scalar loss") {
  Parameter w("w", Tensor({2, 2}));
  Graph g;
  CHECK_THROWS_AS(g.backward(g.param(w)), ShapeError);
}

TEST_CASE("shape errors name the op with expected and actual shapes") {
  Graph g;
  Var a = g.constant(Tensor({2, 3})), b = g.constant(Tensor({4, 5}));
  try {
    ops::matmul(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(a, b), ShapeError);
  CHECK_THROWS_AS(ops::cross_entropy(g.constant(Tensor({2, 3})), {0, 3}), ConfigError);
}

TEST_CASE("non-finite forward output is a numeric error") {
  Graph g;
  CHECK_THROWS_AS(ops::exp(g.constant(Tensor::from({1}, {1000.0}))), NumericError);
  CHECK_THROWS_AS(g.constant(Tensor::from({1}, {NAN})), NumericError);
}

TEST_CASE("grad_check on a linear layer, attention block and constant graph") {
  Rng rng = make_rng(8, "gc");
  Tensor x = random(rng, {5, 4}), t = random(rng, {5, 3});
  Parameter w("w", random(rng, {4, 3})), b("b", random(rng, {3}));
  LossBuilder linear = [&](Graph& g) {
    return ops::mse(ops::bias_add(ops::matmul(g.constant(x), g.param(w)), g.param(b)),
                    g.constant(t));
  };
  CHECK(grad_check(linear, w, 1e-5) <= 1e-6);
  CHECK(grad_check(linear, b, 1e-5) <= 1e-6);

  const std::size_t E = 8, P = 8;
  Tensor xs = random(rng, {2, 5, E}), ts = random(rng, {2, 5, E});
  std::vector<Parameter> mha;
  for (const char* name : {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"}) {
    const bool bias = name[0] == 'b';
    const bool out = name[1] == 'o';
    Shape s = bias ? Shape{out ? E : P} : (out ? Shape{P, E} : Shape{E, P});
    mha.emplace_back(name, random(rng, s, 0.4));
  }
  LossBuilder attention = [&](Graph& g) {
    std::vector<Var> v;
    for (auto& p : mha) v.push_back(g.param(p));
    return ops::mse(ops::multi_head_attention(g.constant(xs), v[0], v[1], v[2], v[3], v[4], v[5],
                                              v[6], v[7], 4),
                    g.constant(ts));
  };
  for (auto& p : mha) CHECK(grad_check(attention, p, 1e-5) <= 1e-5);

  Parameter idle("idle", random(rng, {3}));
  LossBuilder constant = [&](Graph& g) {
    g.param(idle);
    return ops::sum(g.constant(x));
  };
  CHECK(grad_check(constant, idle, 1e-5) == 0.0);
  CHECK_THROWS_AS(grad_check(constant, idle, 0.0), ConfigError);
}

TEST_CASE("grad_check restores the parameter value") {
  Rng rng = make_rng(9, "restore");
  Parameter w("w", random(rng, {3, 3}));
  const Tensor before = w.value;
  LossBuilder f = [&](Graph& g) { return ops::sum(ops::exp(g.param(w))); };
  grad_check(f, w, 1e-5);
  CHECK(w.value == before);
}

TEST_CASE("scaled dot-product attention matches a hand computation") {
  // One query attending two keys with scores 0 and 1/sqrt(2)*2.
  Graph g;
  Var q = g.constant(Tensor::from({1, 1, 2}, {1, 1}));
  Var k = g.constant(Tensor::from({1, 2, 2}, {0, 0, 1, 1}));
  Var v = g.constant(Tensor::from({1, 2, 1}, {10, 20}));
  const double s = 2.0 / std::sqrt(2.0);
  const double p1 = std::exp(s) / (1.0 + std::exp(s));
  CHECK(ops::scaled_dot_product_attention(q, k, v).item() ==
        doctest::Approx(10 * (1 - p1) + 20 * p1).epsilon(1e-14));
  // Masking the second key leaves only the first.
  CHECK(ops::scaled_dot_product_attention(q, k, v, {1, 0}).item() == doctest::Approx(10.0));
}

TEST_CASE("layer_norm normalises the last axis") {
  Graph g;
  Var y = ops::layer_norm(g.constant(Tensor::from({1, 4}, {1, 2, 3, 4})),
                          g.constant(Tensor::full({4}, 1.0)), g.constant(Tensor({4})), 0.0);
  const double sd = std::sqrt(1.25);
  CHECK(y.value()[0] == doctest::Approx(-1.5 / sd));
  CHECK(y.value()[3] == doctest::Approx(1.5 / sd));
}

TEST_CASE("adam: zero gradient leaves the parameter, moments decay") {
  Parameter p("p", Tensor::from({2}, {1.5, -2.0}));
  Adam adam;
  p.grad = Tensor::from({2}, {1.0, 1.0});
  Parameter* ps[] = {&p};
  adam.step(ps);
  const Tensor after_first = p.value;
  const Tensor m = p.adam_m, v = p.adam_v;
  p.zero_grad();
  adam.step(ps);
  CHECK(p.value[0] != after_first[0]);  // momentum still moves it
  Parameter q("q", Tensor::from({1}, {3.0}));
  Adam fresh;
  Parameter* qs[] = {&q};
  fresh.step(qs);
  CHECK(q.value[0] == 3.0);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(std::abs(p.adam_m[i]) < std::abs(m[i]));
    CHECK(std::abs(p.adam_v[i]) < std::abs(v[i]));
  }
}

TEST_CASE("adam: first step moves by lr*g/(|g|+eps); second is no larger") {
  Parameter p("p", Tensor::scalar(0.5));
  Adam adam({.lr = 1e-3});
  Parameter* ps[] = {&p};
  p.grad = Tensor::scalar(1.0);
  adam.step(ps);
  const double first = 0.5 - p.value[0];
  CHECK(first == doctest::Approx(1e-3 * 1.0 / (1.0 + 1e-8)).epsilon(1e-12));
  p.grad = Tensor::scalar(1.0);
  const double before = p.value[0];
  adam.step(ps);
  const double second = before - p.value[0];
  CHECK(second <= first + 1e-18);
  CHECK(adam.steps() == 2);
}

TEST_CASE("op suite covers every differentiable op once and passes") {
  auto names = gradcheck_case_names();
  std::set<std::string> unique(names.begin(), names.end());
  CHECK(unique.size() == names.size());
  for (int k = static_cast<int>(OpKind::kMatmul); k <= static_cast<int>(OpKind::kNegate); ++k)
    CHECK(unique.count(std::string(op_name(static_cast<OpKind>(k)))) == 1);
  CHECK(unique.count("mmd_estimate") == 1);

  GradcheckOptions options;
  options.seeds = 20;
  const auto report = run_gradcheck_suite(options);
  for (const auto& e : report.entries) {
    INFO(e.name << " max error " << e.max_error);
    CHECK(e.passed);
    CHECK(e.max_error <= 1e-5);
  }
}

TEST_CASE("a sign-flipped backward is caught") {
  for (OpKind kind : {OpKind::kMatmul, OpKind::kSoftmax, OpKind::kConv2d, OpKind::kExp}) {
    GradcheckOptions options;
    options.seeds = 2;
    options.sign_flip = kind;
    const auto report = run_gradcheck_suite(options);
    CHECK_FALSE(report.passed());
    for (const auto& e : report.entries)
      if (e.name == op_name(kind)) CHECK_FALSE(e.passed);
  }
}

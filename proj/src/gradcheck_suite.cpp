// src/gradcheck_suite.cpp

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

#include "xmodal/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <string>

#include "xmodal/mmd.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

namespace {

struct Case {
  std::vector<Tensor> inputs;
  std::function<Var(std::span<const Var>)> apply;
};

struct Registered {
  std::string name;
  std::function<Case(Rng&)> make;
};

Tensor random(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng, 0.0, scale);
  return t;
}

// Entries at least 0.1 away from the relu kink.
Tensor away_from_zero(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.1, 1.0);
  return t;
}

// Key mask with at least one attended key per batch row.
std::vector<std::uint8_t> random_mask(Rng& rng, std::size_t batch, std::size_t keys) {
  std::vector<std::uint8_t> mask(batch * keys);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < keys; ++s) mask[b * keys + s] = uniform(rng, 0.0, 1.0) < 0.7;
    mask[b * keys + uniform_index(rng, keys)] = 1;
  }
  return mask;
}

Case unary_case(Tensor x, std::function<Var(Var)> f) {
  return {{std::move(x)}, [f](std::span<const Var> v) { return f(v[0]); }};
}

std::vector<Registered> registry() {
  std::vector<Registered> r;
  r.push_back({"matmul", [](Rng& g) {
                 return Case{{random(g, {2, 3, 4}), random(g, {4, 5})},
                             [](std::span<const Var> v) { return ops::matmul(v[0], v[1]); }};
               }});
  r.push_back({"add", [](Rng& g) {
                 return Case{{random(g, {3, 4}), random(g, {3, 4})},
                             [](std::span<const Var> v) { return ops::add(v[0], v[1]); }};
               }});
  r.push_back({"bias_add", [](Rng& g) {
                 return Case{{random(g, {2, 3, 4}), random(g, {4})},
                             [](std::span<const Var> v) { return ops::bias_add(v[0], v[1]); }};
               }});
  r.push_back({"relu", [](Rng& g) { return unary_case(away_from_zero(g, {3, 5}), ops::relu); }});
  r.push_back({"gelu", [](Rng& g) { return unary_case(random(g, {3, 5}, 2.0), ops::gelu); }});
  r.push_back({"softmax", [](Rng& g) { return unary_case(random(g, {3, 5}, 2.0), ops::softmax); }});
  r.push_back({"layer_norm", [](Rng& g) {
                 return Case{{random(g, {2, 3, 6}), random(g, {6}), random(g, {6})},
                             [](std::span<const Var> v) { return ops::layer_norm(v[0], v[1], v[2]); }};
               }});
  r.push_back({"reshape", [](Rng& g) {
                 return unary_case(random(g, {2, 6}), [](Var x) { return ops::reshape(x, {3, 4}); });
               }});
  r.push_back({"transpose", [](Rng& g) {
                 return unary_case(random(g, {2, 3, 4}),
                                   [](Var x) { return ops::transpose(x, {2, 0, 1}); });
               }});
  r.push_back({"concat", [](Rng& g) {
                 return Case{{random(g, {2, 3}), random(g, {2, 1}), random(g, {2, 2})},
                             [](std::span<const Var> v) { return ops::concat(v, 1); }};
               }});
  r.push_back({"slice", [](Rng& g) {
                 return unary_case(random(g, {4, 5}), [](Var x) { return ops::slice(x, 1, 1, 4); });
               }});
  r.push_back({"reverse_along_axis", [](Rng& g) {
                 return unary_case(random(g, {3, 4, 2}),
                                   [](Var x) { return ops::reverse_along_axis(x, 1); });
               }});
  r.push_back({"conv2d", [](Rng& g) {
                 return Case{{random(g, {2, 2, 7, 6}), random(g, {3, 2, 3, 3}), random(g, {3})},
                             [](std::span<const Var> v) { return ops::conv2d(v[0], v[1], v[2], 2, 1); }};
               }});
  r.push_back({"deconv2d", [](Rng& g) {
                 return Case{{random(g, {2, 3, 3, 4}), random(g, {3, 2, 3, 3}), random(g, {2})},
                             [](std::span<const Var> v) {
                               return ops::deconv2d(v[0], v[1], v[2], 2, 1, 1, 0);
                             }};
               }});
  r.push_back({"scaled_dot_product_attention", [](Rng& g) {
                 auto mask = random_mask(g, 2, 5);
                 return Case{{random(g, {2, 3, 4}), random(g, {2, 5, 4}), random(g, {2, 5, 3})},
                             [mask](std::span<const Var> v) {
                               return ops::scaled_dot_product_attention(v[0], v[1], v[2], mask);
                             }};
               }});
  r.push_back({"multi_head_attention", [](Rng& g) {
                 auto mask = random_mask(g, 2, 4);
                 std::vector<Tensor> in{random(g, {2, 4, 6})};
                 for (int i = 0; i < 3; ++i) {
                   in.push_back(random(g, {6, 4}, 0.5));
                   in.push_back(random(g, {4}, 0.1));
                 }
                 in.push_back(random(g, {4, 6}, 0.5));
                 in.push_back(random(g, {6}, 0.1));
                 return Case{std::move(in), [mask](std::span<const Var> v) {
                               return ops::multi_head_attention(v[0], v[1], v[2], v[3], v[4], v[5],
                                                                v[6], v[7], v[8], 2, mask);
                             }};
               }});
  r.push_back({"mse", [](Rng& g) {
                 return Case{{random(g, {3, 4}), random(g, {3, 4})},
                             [](std::span<const Var> v) { return ops::mse(v[0], v[1]); }};
               }});
  r.push_back({"cross_entropy", [](Rng& g) {
                 std::vector<int> labels(4);
                 for (auto& l : labels) l = static_cast<int>(uniform_index(g, 5));
                 return unary_case(random(g, {4, 5}, 2.0),
                                   [labels](Var x) { return ops::cross_entropy(x, labels); });
               }});
  r.push_back({"exp", [](Rng& g) { return unary_case(random(g, {3, 4}, 0.5), ops::exp); }});
  r.push_back({"squared_euclidean_distance_matrix", [](Rng& g) {
                 return Case{{random(g, {4, 3}), random(g, {5, 3})},
                             [](std::span<const Var> v) { return ops::squared_distances(v[0], v[1]); }};
               }});
  r.push_back({"mean", [](Rng& g) { return unary_case(random(g, {3, 4}), ops::mean); }});
  r.push_back({"sum", [](Rng& g) { return unary_case(random(g, {3, 4}), ops::sum); }});
  r.push_back({"scalar_mul", [](Rng& g) {
                 return unary_case(random(g, {3, 4}), [](Var x) { return ops::scalar_mul(x, -1.7); });
               }});
  r.push_back({"scalar_add", [](Rng& g) {
                 return unary_case(random(g, {3, 4}), [](Var x) { return ops::scalar_add(x, 0.3); });
               }});
  r.push_back({"negate", [](Rng& g) { return unary_case(random(g, {3, 4}), ops::negate); }});
  r.push_back({"mmd_estimate", [](Rng& g) {
                 Tensor p = random(g, {6, 3});
                 Tensor q = random(g, {5, 3});
                 for (std::size_t i = 0; i < q.size(); ++i) q[i] += 0.5;
                 const double sigma = mmd::median_heuristic_sigma(p, q);
                 return Case{{std::move(p), std::move(q)}, [sigma](std::span<const Var> v) {
                               return mmd::mmd_estimate(v[0], v[1], sigma);
                             }};
               }});
  return r;
}

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

std::vector<std::string> gradcheck_case_names() {
  std::vector<std::string> names;
  for (const auto& c : registry()) names.push_back(c.name);
  return names;
}

std::optional<OpKind> op_kind_from_name(std::string_view name) {
  for (int k = static_cast<int>(OpKind::kMatmul); k <= static_cast<int>(OpKind::kNegate); ++k)
    if (op_name(static_cast<OpKind>(k)) == name) return static_cast<OpKind>(k);
  return std::nullopt;
}

GradcheckReport run_gradcheck_suite(const GradcheckOptions& options) {
  GradcheckReport report;
  for (const auto& reg : registry()) {
    GradcheckEntry entry;
    entry.name = reg.name;
    for (std::size_t seed = 0; seed < options.seeds; ++seed) {
      Rng rng = make_rng(options.base_seed, "gradcheck/" + reg.name + "/" + std::to_string(seed));
      Case c = reg.make(rng);
      std::vector<Parameter> params;
      params.reserve(c.inputs.size());
      for (std::size_t i = 0; i < c.inputs.size(); ++i)
        params.emplace_back("in" + std::to_string(i), c.inputs[i]);

      Tensor target;
      {
        Graph g;
        std::vector<Var> vars;
        for (const auto& t : c.inputs) vars.push_back(g.constant(t));
        target = random(rng, c.apply(vars).shape());
      }
      LossBuilder build = [&](Graph& g) {
        if (options.sign_flip) g.inject_sign_flip(*options.sign_flip);
        std::vector<Var> vars;
        for (auto& p : params) vars.push_back(g.param(p));
        return ops::mse(c.apply(vars), g.constant(target));
      };
      for (auto& p : params) {
        entry.max_error = std::max(entry.max_error, grad_check(build, p, options.epsilon));
        ++entry.checks;
      }
    }
    entry.passed = entry.max_error <= options.tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace xmodal

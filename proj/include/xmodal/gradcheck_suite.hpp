// include/xmodal/gradcheck_suite.hpp

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

// Finite-difference checks over every differentiable op and the MMD
// estimator. Each case builds a small random graph around one op, uses
// mse(op output, random target) as the loss, and checks every input tensor.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xmodal/autodiff.hpp"

namespace xmodal {

struct GradcheckOptions {
  std::size_t seeds = 20;
  double epsilon = 1e-5;
  double tolerance = 1e-5;
  std::uint64_t base_seed = 1;
  /// Negative control: negate the backward of this op kind in every graph.
  std::optional<OpKind> sign_flip;
};

struct GradcheckEntry {
  std::string name;
  double max_error = 0.0;
  std::size_t checks = 0;  // tensors checked over all seeds
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool passed() const;
};

/// Names of the registered cases, one per op plus "mmd_estimate".
std::vector<std::string> gradcheck_case_names();

GradcheckReport run_gradcheck_suite(const GradcheckOptions& options = {});

/// Inverse of op_name() for the differentiable kinds.
std::optional<OpKind> op_kind_from_name(std::string_view name);

}  // namespace xmodal

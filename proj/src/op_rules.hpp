// src/op_rules.hpp

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

#pragma once

#include <span>
#include <vector>

#include "xmodal/autodiff.hpp"

namespace xmodal::detail {

/// Validates input shapes, computes the output and stores whatever the
/// backward rule needs in `saved`.
Tensor forward_rule(OpKind kind, std::span<const Tensor* const> in, const OpAttrs& attrs,
                    std::vector<Tensor>& saved);

/// Accumulates input gradients. grads[i] is null for inputs that need no
/// gradient; the others already have their input's shape.
void backward_rule(OpKind kind, std::span<const Tensor* const> in, const Tensor& out,
                   const Tensor& gout, const OpAttrs& attrs, const std::vector<Tensor>& saved,
                   std::span<Tensor* const> grads);

}  // namespace xmodal::detail

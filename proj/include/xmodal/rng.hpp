// include/xmodal/rng.hpp

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

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace xmodal {

using Rng = std::mt19937_64;

/// Seed for an independent substream identified by `tag`. Streams derived
/// from the same base seed with different tags do not share state, so
/// consuming one never shifts another.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

inline Rng make_rng(std::uint64_t base, std::string_view tag) {
  return Rng(derive_seed(base, tag));
}

double uniform(Rng& rng, double lo, double hi);
double normal(Rng& rng, double mean = 0.0, double stddev = 1.0);
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniformly random permutation of 0..n-1.
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

/// Uniformly random permutation of 0..n-1 without fixed points (n >= 2),
/// drawn by rejection.
std::vector<std::size_t> derangement(Rng& rng, std::size_t n);

}  // namespace xmodal

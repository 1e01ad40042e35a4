// include/xmodal/mmd.hpp

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

// Gaussian-kernel Maximum Mean Discrepancy and the cross-modal matching
// losses built on it.
//
// The estimator is the unbiased one: within-set kernel sums exclude the
// diagonal and are normalised by m(m-1), the cross term by mn. It can be
// negative when the two sets are close.
//
// Matching losses work on groups of aligned batch rows. With group size g a
// batch of m rows splits into m/g consecutive groups. The paired term
// compares, inside each group, the acoustic latents with the visual/lexical
// latents of the same utterances. The unpaired term compares a group's
// acoustic latents with the visual/lexical latents of a different group
// chosen by a derangement, so the compared sets always come from different
// utterances. Group size 0 selects the coarse layout: whole batch for the
// paired term and two half batches for the unpaired term.

#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "xmodal/autodiff.hpp"

namespace xmodal::mmd {

enum class SigmaPolicy { kFixed, kMedianHeuristic };

struct KernelConfig {
  SigmaPolicy policy = SigmaPolicy::kMedianHeuristic;
  /// Fixed bandwidth, or the last bandwidth the heuristic produced.
  double sigma = 1.0;
};

struct MatchingConfig {
  std::size_t group_size = 0;
  /// Adds the visual/lexical pair to the acoustic-anchored pairs.
  bool include_visual_lexical = false;
  /// The unpaired contribution never goes below this value.
  double unpair_floor = -2.0;
};

/// Latent batches per modality; absent modalities are empty.
struct Latents {
  std::optional<Var> acoustic, visual, lexical;
};

/// k(x, x') = exp(-|x - x'|^2 / (2 sigma^2)).
double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma);

/// sqrt(median pairwise squared distance of the pooled rows / 2); 1 when
/// that median is zero. Throws when fewer than two rows are pooled.
double median_heuristic_sigma(const Tensor& p, const Tensor& q);

/// Bandwidth for comparing p with q under `kernel`. For the heuristic the
/// result is also stored back into kernel.sigma.
double resolve_sigma(KernelConfig& kernel, const Tensor& p, const Tensor& q);

/// Differentiable unbiased estimate between row sets p [m,d] and q [n,d].
/// sigma is a constant of the graph. Throws when m or n < 2.
Var mmd_estimate(Var p, Var q, double sigma);

/// Value-only estimate with the bandwidth chosen by `kernel`.
double mmd_estimate(const Tensor& p, const Tensor& q, KernelConfig& kernel);

/// Modality pairs compared by the matching losses, in order: (a,v), (a,l)
/// and optionally (v,l). With a missing modality the first present one
/// anchors the remaining ones.
std::vector<std::pair<Var, Var>> matching_pairs(const Latents& z, bool include_visual_lexical);

/// Sum over matching pairs of mmd_estimate on aligned sets. All present
/// modalities must have the same rows and dimension. With group size g > 0
/// the estimate for each pair is the mean over groups. One bandwidth per
/// modality pair is resolved on the whole batch.
Var pair_loss(const Latents& z, KernelConfig& kernel, const MatchingConfig& config = {});

struct UnpairTerm {
  Var loss;      // -(sum of mismatched estimates), clamped at the floor
  double raw;    // the sum of mismatched estimates before negation
  bool clamped;
};

/// Negated MMD sum on mismatched sets. `derange_second` holds one
/// derangement over groups per matching pair (two halves when group size
/// is 0), mapping each group of the anchor modality to a different group of
/// the other modality.
UnpairTerm unpair_loss(const Latents& z, KernelConfig& kernel,
                       std::span<const std::vector<std::size_t>> derange_second,
                       const MatchingConfig& config = {});

/// Number of groups a batch of `rows` splits into (2 for group size 0).
std::size_t group_count(std::size_t rows, const MatchingConfig& config);

}  // namespace xmodal::mmd

// include/xmodal/run_config.hpp

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

// The single structured-text config file read by every subcommand. Every
// field is optional; unknown keys are rejected.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmodal/data.hpp"
#include "xmodal/training.hpp"

namespace xmodal {

struct RunConfig {
  std::filesystem::path data = "data/synth";  // dataset directory
  std::filesystem::path out = "runs";          // parent of run directories
  SynthConfig synth;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};  // ablate and sweep
  std::vector<std::size_t> quotas{0, 250, 500, 1000, 2000};
  std::size_t folds = 5;                       // kfold
  std::size_t jobs = 1;                        // concurrent runs
};

/// The synthetic benchmark the experiment runners are tuned on: the default
/// corpus sizes with extra nuisance dimensions, toy models, semi mode with
/// matching over groups of four.
RunConfig standard_benchmark();

void to_json(nlohmann::json& j, const RunConfig& c);

/// Defaults overlaid with `j`; throws ConfigError on unknown keys.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace xmodal

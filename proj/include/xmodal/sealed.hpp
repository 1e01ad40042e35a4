// include/xmodal/sealed.hpp

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

// Ground-truth labels of the unlabeled pool. Training never includes this
// header; only the generator writes the file and the unlabeled-set
// evaluation reads it.

#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace xmodal::sealed {

std::filesystem::path truth_path(const std::filesystem::path& dataset_dir);

void write_truth(const std::filesystem::path& dataset_dir, const std::map<std::string, int>& labels);

/// Throws IoError when the file is missing or malformed.
std::map<std::string, int> read_truth(const std::filesystem::path& dataset_dir);

}  // namespace xmodal::sealed

// src/sealed.cpp

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

#include "xmodal/sealed.hpp"

#include <fstream>

#include <json.hpp>

#include "xmodal/error.hpp"

namespace xmodal::sealed {

std::filesystem::path truth_path(const std::filesystem::path& dataset_dir) {
  return dataset_dir / "sealed" / "unlabeled_truth.json";
}

void write_truth(const std::filesystem::path& dataset_dir, const std::map<std::string, int>& labels) {
  const auto path = truth_path(dataset_dir);
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << nlohmann::json(labels).dump() << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

std::map<std::string, int> read_truth(const std::filesystem::path& dataset_dir) {
  const auto path = truth_path(dataset_dir);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<std::map<std::string, int>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace xmodal::sealed

// src/run_config.cpp

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

#include "xmodal/run_config.hpp"

#include <fstream>

#include "xmodal/error.hpp"

namespace xmodal {

using nlohmann::json;

void to_json(json& j, const RunConfig& c) {
  j = {{"data", c.data.string()}, {"out", c.out.string()}, {"synth", c.synth}, {"train", c.train},
       {"seeds", c.seeds},        {"quotas", c.quotas},     {"folds", c.folds}, {"jobs", c.jobs}};
}

RunConfig standard_benchmark() {
  RunConfig c;
  c.data = "data/standard";
  c.synth.nuisance_acoustic = 48;
  c.synth.nuisance_visual = 8;
  c.synth.nuisance_lexical = 20;
  c.synth.nuisance_scale = 2.0;
  c.train.mode = TrainMode::kSemi;
  c.train.batch_size = 16;
  c.train.lr = 3e-3;
  c.train.weights = {.alpha = 0.1, .beta = 1.0, .omega = 3.0};
  c.train.matching.group_size = 4;
  return c;
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected an object at the top level");
  RunConfig c;
  const json defaults = c;
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  try {
    if (j.contains("data")) c.data = j.at("data").get<std::string>();
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("synth")) from_json(j.at("synth"), c.synth);
    if (j.contains("train")) from_json(j.at("train"), c.train);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("quotas")) c.quotas = j.at("quotas").get<std::vector<std::size_t>>();
    if (j.contains("folds")) c.folds = j.at("folds");
    if (j.contains("jobs")) c.jobs = j.at("jobs");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.seeds.empty()) throw ConfigError("config: seeds must not be empty");
  if (c.jobs == 0) throw ConfigError("config: jobs must be positive");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace xmodal

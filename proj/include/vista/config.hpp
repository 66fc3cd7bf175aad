// Copyright 2026 The VISTA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VISTA_CONFIG_HPP_
#define VISTA_CONFIG_HPP_

#include <string>

#include "vista/training.hpp"

namespace vista {

// Experiment file: INI-style sections [model], [task], [train], [loss] with
// `key = value` lines. Unknown sections or keys are rejected with the line
// number; omitted keys fall back to defaults.
struct ExperimentConfig {
  TaskSpec task;
  TrainConfig train;
  uint64_t content_hash = 0;
  std::string source;

  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_text(const std::string& text, const std::string& origin);
};

void write_run_manifest(const std::string& path, const ExperimentConfig& config);

}  // namespace vista

#endif  // VISTA_CONFIG_HPP_

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

#ifndef VISTA_CHECKPOINT_HPP_
#define VISTA_CHECKPOINT_HPP_

#include <string>
#include <vector>

#include "vista/model.hpp"

namespace vista {

// Flat little-endian binary:
//   magic "VSTA" | u32 version | u32 vocab_size, d_model, n_layers, n_heads,
//   n_image_tokens, max_text_len, d_image_feat | u64 seed | u32 block count |
//   blocks of { u16 name length | name bytes | u64 element count | f64 data }.
// Model parameters are stored first, in ParamStore order; auxiliary named
// blocks (e.g. "task.meta") follow. Round-trips are bit-exact.
inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedBlock {
  std::string name;
  std::vector<double> values;
};

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
  std::vector<NamedBlock> extras;

  const NamedBlock* find_extra(std::string_view name) const;
};

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamStore& params, const std::vector<NamedBlock>& extras = {});

Checkpoint load_checkpoint(const std::string& path);

}  // namespace vista

#endif  // VISTA_CHECKPOINT_HPP_

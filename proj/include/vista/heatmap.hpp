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

#ifndef VISTA_HEATMAP_HPP_
#define VISTA_HEATMAP_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "vista/losses.hpp"
#include "vista/model.hpp"

namespace vista {

// Text-position x image-position cosine similarities for one example, plus
// the per-image-position mean over text positions.
struct HeatmapData {
  int m = 0;
  int n = 0;
  std::vector<double> sim;   // m x n
  std::vector<double> mean;  // n
};

HeatmapData compute_heatmap(const ModelConfig& config, const ParamStore& params,
                            const MultimodalBatch& single_example,
                            TextRepr text_repr = TextRepr::kEmbedding);

// Grayscale byte for a similarity in [-1, 1]: round-half-up of
// 255 * (sim + 1) / 2, clamped into [0, 255].
uint8_t similarity_to_byte(double sim);

struct HeatmapMeta {
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  std::string checkpoint;
};

// `<prefix>.csv` (m x n matrix), `<prefix>.mean.csv` (one value per line),
// `<prefix>.pgm` (binary P5, width n, height m).
void write_heatmap_files(const std::string& prefix, const HeatmapData& data,
                         const HeatmapMeta& meta);

}  // namespace vista

#endif  // VISTA_HEATMAP_HPP_

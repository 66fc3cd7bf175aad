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

#ifndef VISTA_LOSSES_HPP_
#define VISTA_LOSSES_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "vista/model.hpp"
#include "vista/tensor.hpp"

namespace vista {

// Position weighting f(t) for the alignment term, 1-based over supervised
// positions: normalized -> t/m, linear -> t, uniform -> constant c >= 0.
struct WeightScheme {
  enum class Kind { kNormalized, kLinear, kUniform };

  Kind kind = Kind::kNormalized;
  double c = 0.0;

  static WeightScheme normalized() { return {Kind::kNormalized, 0.0}; }
  static WeightScheme linear() { return {Kind::kLinear, 0.0}; }
  static WeightScheme uniform(double c);
};

double vista_weight(int t, int m, const WeightScheme& scheme);
std::vector<double> vista_weights(int m, const WeightScheme& scheme);

// Exact mean of f(1..m): the numerator sum is computed in integer arithmetic
// so the result is a single correctly rounded division.
double vista_weight_mean(int m, const WeightScheme& scheme);

enum class VistaVariant { kL2, kCosine, kNone };
enum class TextRepr { kEmbedding, kHidden };

struct LossOptions {
  WeightScheme scheme = WeightScheme::normalized();
  VistaVariant variant = VistaVariant::kL2;
  TextRepr text_repr = TextRepr::kEmbedding;
  double vista_scale = 1.0;  // ablation knob; 1.0 leaves the f(t)/m balance alone
  double cosine_eps = 1e-12;
};

// Mean over supervised positions of -log softmax(logits)[target], natural log.
Tensor cross_entropy(Graph& g, const Tensor& logits, std::span<const int> targets,
                     std::span<const uint8_t> mask);

// Alignment surrogate, per example: (1/m_eff) * sum over supervised positions
// (re-indexed 1..m_eff) of f(t)*||x_t - anchor||^2, then averaged over the
// examples that have at least one supervised position.
Tensor vista_l2_loss(Graph& g, const Tensor& text_repr, const Tensor& image_summary,
                     std::span<const uint8_t> mask, const WeightScheme& scheme,
                     int batch, int m);

// Cosine variant: -(1/m_eff) * sum f(t)*cos(x_t, anchor), batch-averaged.
Tensor vista_cosine_loss(Graph& g, const Tensor& text_repr, const Tensor& image_summary,
                         std::span<const uint8_t> mask, const WeightScheme& scheme,
                         int batch, int m, double eps = 1e-12);

struct LossReport {
  Tensor ce;
  Tensor vista;
  Tensor total;                 // sum node: total == ce + vista by construction
  std::vector<double> weights;  // f(1..m) at the batch text length
  int supervised_count = 0;
};

LossReport total_loss(Graph& g, const ForwardOutput& fwd, const MultimodalBatch& batch,
                      const LossOptions& options);

}  // namespace vista

#endif  // VISTA_LOSSES_HPP_

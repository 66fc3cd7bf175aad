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

#ifndef VISTA_MODEL_HPP_
#define VISTA_MODEL_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vista/tensor.hpp"

namespace vista {

// Toy multimodal decoder: projected image features are prefixed to text token
// embeddings and processed with causal attention (the image prefix is fully
// visible to itself and to every text position).
struct ModelConfig {
  int vocab_size = 32;
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 4;
  int n_image_tokens = 8;
  int max_text_len = 16;
  int d_image_feat = 16;
  uint64_t seed = 1;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  int mlp_hidden() const { return 4 * d_model; }
};

// Named, ordered parameter collection. Ordering is fixed by init_params and
// is part of the checkpoint contract.
class ParamStore {
 public:
  struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> momentum;
  };

  Param& add(std::string name, Shape shape);
  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;

  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

  int64_t element_count() const;
  void zero_grad();

 private:
  std::vector<Param> params_;
};

// Deterministic initialization from config.seed.
ParamStore init_params(const ModelConfig& config);

struct MultimodalBatch {
  int batch = 0;
  int n = 0;             // image tokens per example
  int m = 0;             // text tokens per example
  int d_image_feat = 0;
  std::vector<double> image_features;  // batch*n*d_image_feat
  std::vector<int> text_ids;           // batch*m
  std::vector<uint8_t> loss_mask;      // batch*m, nonzero = supervised

  void validate(const ModelConfig& config) const;
};

// Per-graph leaves for every named parameter, in store order.
struct BoundParams {
  std::vector<Tensor> leaves;
  const ParamStore* store = nullptr;

  const Tensor& at(std::string_view name) const;
};

BoundParams bind_params(Graph& g, const ParamStore& store, bool requires_grad);

struct ForwardOutput {
  Tensor logits;           // [batch*m x V]
  Tensor image_hidden;     // [batch*n x d], last layer at image positions
  Tensor image_summary;    // [batch x d], last image position of image_hidden
  Tensor text_embeddings;  // [batch*m x d], embedding-table output
  Tensor text_hidden;      // [batch*m x d], last layer at text positions
  int batch = 0, n = 0, m = 0;
};

// Row-major (n+m)x(n+m) visibility: position i attends j iff j <= i, with the
// first n positions mutually visible.
std::vector<uint8_t> build_causal_mask(int n, int m);

enum class ProjActivation { kGelu, kLinear };

struct ProjectorParams {
  Tensor w1, b1, w2, b2;
  ProjActivation activation = ProjActivation::kGelu;
};

// Two-layer connector from image-feature space into the embedding space.
Tensor project_image(Graph& g, const Tensor& features, const ProjectorParams& proj);

ForwardOutput forward(Graph& g, const ModelConfig& config, const BoundParams& params,
                      const MultimodalBatch& batch);

}  // namespace vista

#endif  // VISTA_MODEL_HPP_

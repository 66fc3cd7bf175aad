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

#include "vista/model.hpp"

#include <cmath>

#include "vista/rng.hpp"

namespace vista {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kAttnMaskValue = -1e9;

}  // namespace

void ModelConfig::validate() const {
  require(vocab_size >= 1 && d_model >= 1 && n_layers >= 1 && n_heads >= 1 &&
              n_image_tokens >= 1 && max_text_len >= 1 && d_image_feat >= 1,
          ErrorKind::kInvalid, "ModelConfig: all extents must be >= 1");
  require(d_model % n_heads == 0, ErrorKind::kInvalid,
          "ModelConfig: d_model must be divisible by n_heads");
}

ParamStore::Param& ParamStore::add(std::string name, Shape shape) {
  Param p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  const size_t n = static_cast<size_t>(shape_numel(p.shape));
  p.value.assign(n, 0.0);
  p.grad.assign(n, 0.0);
  p.momentum.assign(n, 0.0);
  params_.push_back(std::move(p));
  return params_.back();
}

ParamStore::Param* ParamStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const ParamStore::Param* ParamStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

int64_t ParamStore::element_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += shape_numel(p.shape);
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

ParamStore init_params(const ModelConfig& config) {
  config.validate();
  const int d = config.d_model;
  const int v = config.vocab_size;
  const int hidden = config.mlp_hidden();

  ParamStore store;
  store.add("embed.table", {v, d});
  store.add("pos.table", {config.n_image_tokens + config.max_text_len, d});
  store.add("proj.w1", {config.d_image_feat, d});
  store.add("proj.b1", {d});
  store.add("proj.w2", {d, d});
  store.add("proj.b2", {d});
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    store.add(prefix + "ln1.gain", {d});
    store.add(prefix + "ln1.bias", {d});
    store.add(prefix + "attn.wq", {d, d});
    store.add(prefix + "attn.bq", {d});
    store.add(prefix + "attn.wk", {d, d});
    store.add(prefix + "attn.bk", {d});
    store.add(prefix + "attn.wv", {d, d});
    store.add(prefix + "attn.bv", {d});
    store.add(prefix + "attn.wo", {d, d});
    store.add(prefix + "attn.bo", {d});
    store.add(prefix + "ln2.gain", {d});
    store.add(prefix + "ln2.bias", {d});
    store.add(prefix + "mlp.w1", {d, hidden});
    store.add(prefix + "mlp.b1", {hidden});
    store.add(prefix + "mlp.w2", {hidden, d});
    store.add(prefix + "mlp.b2", {d});
  }
  store.add("final_ln.gain", {d});
  store.add("final_ln.bias", {d});
  store.add("head.w", {d, v});
  store.add("head.b", {v});

  Rng rng(config.seed);
  for (auto& p : store.all()) {
    const std::string leaf = p.name.substr(p.name.rfind('.') + 1);
    if (leaf == "gain") {
      std::fill(p.value.begin(), p.value.end(), 1.0);
    } else if (leaf[0] == 'b') {
      // biases stay zero
    } else if (p.name == "embed.table" || p.name == "pos.table") {
      for (double& x : p.value) x = rng.normal(0.0, 0.08);
    } else {
      const double std = 1.0 / std::sqrt(static_cast<double>(p.shape[0]));
      for (double& x : p.value) x = rng.normal(0.0, std);
    }
  }
  return store;
}

void MultimodalBatch::validate(const ModelConfig& config) const {
  require(batch >= 1, ErrorKind::kInvalid, "batch must contain at least one example");
  require(n == config.n_image_tokens, ErrorKind::kInvalid,
          "batch image-token count does not match the model config");
  require(d_image_feat == config.d_image_feat, ErrorKind::kInvalid,
          "batch feature width does not match the model config");
  require(m >= 1 && m <= config.max_text_len, ErrorKind::kInvalid,
          "text length must lie in [1, max_text_len]");
  require(image_features.size() == static_cast<size_t>(batch) * n * d_image_feat,
          ErrorKind::kInvalid, "image_features extent mismatch");
  require(text_ids.size() == static_cast<size_t>(batch) * m, ErrorKind::kInvalid,
          "text_ids extent mismatch");
  require(loss_mask.size() == text_ids.size(), ErrorKind::kInvalid,
          "loss_mask extent mismatch");
  for (int id : text_ids) {
    require(0 <= id && id < config.vocab_size, ErrorKind::kInvalid,
            "token id " + std::to_string(id) + " out of range");
  }
}

const Tensor& BoundParams::at(std::string_view name) const {
  for (size_t i = 0; i < store->all().size(); ++i) {
    if (store->all()[i].name == name) return leaves[i];
  }
  fail(ErrorKind::kInvalid, "unknown parameter: " + std::string(name));
}

BoundParams bind_params(Graph& g, const ParamStore& store, bool requires_grad) {
  BoundParams bound;
  bound.store = &store;
  bound.leaves.reserve(store.all().size());
  for (const auto& p : store.all()) {
    bound.leaves.push_back(g.leaf(p.shape, p.value, requires_grad));
  }
  return bound;
}

std::vector<uint8_t> build_causal_mask(int n, int m) {
  require(n >= 1 && m >= 1, ErrorKind::kInvalid, "build_causal_mask: n, m must be >= 1");
  const int s = n + m;
  std::vector<uint8_t> mask(static_cast<size_t>(s) * s, 0);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      const bool visible = (j <= i) || (i < n && j < n);
      mask[static_cast<size_t>(i) * s + j] = visible ? 1 : 0;
    }
  }
  return mask;
}

Tensor project_image(Graph& g, const Tensor& features, const ProjectorParams& proj) {
  Tensor h = g.add_rows(g.matmul(features, proj.w1), proj.b1);
  if (proj.activation == ProjActivation::kGelu) h = g.gelu(h);
  return g.add_rows(g.matmul(h, proj.w2), proj.b2);
}

ForwardOutput forward(Graph& g, const ModelConfig& config, const BoundParams& params,
                      const MultimodalBatch& batch) {
  batch.validate(config);
  const int b = batch.batch;
  const int n = batch.n;
  const int m = batch.m;
  const int d = config.d_model;
  const int seq = n + m;
  const int heads = config.n_heads;

  ForwardOutput out;
  out.batch = b;
  out.n = n;
  out.m = m;

  // Connector: image features -> embedding space.
  Tensor feats = g.constant({b * n, batch.d_image_feat}, batch.image_features);
  ProjectorParams proj{params.at("proj.w1"), params.at("proj.b1"),
                       params.at("proj.w2"), params.at("proj.b2")};
  Tensor img_emb = project_image(g, feats, proj);

  // Token embeddings (kept pre-position as the default alignment target).
  out.text_embeddings = g.embedding_gather(params.at("embed.table"), batch.text_ids);

  // Interleave to [b*(n+m) x d] with per-example contiguous blocks.
  std::vector<Tensor> rows;
  rows.reserve(2 * static_cast<size_t>(b));
  for (int e = 0; e < b; ++e) {
    rows.push_back(g.slice_rows(img_emb, static_cast<int64_t>(e) * n, static_cast<int64_t>(e + 1) * n));
    rows.push_back(g.slice_rows(out.text_embeddings, static_cast<int64_t>(e) * m,
                                static_cast<int64_t>(e + 1) * m));
  }
  Tensor x = g.concat_rows(rows);

  // Shared learned absolute positions over the concatenated sequence.
  std::vector<int> pos_ids(static_cast<size_t>(b) * seq);
  for (int e = 0; e < b; ++e) {
    for (int i = 0; i < seq; ++i) pos_ids[static_cast<size_t>(e) * seq + i] = i;
  }
  x = g.add(x, g.embedding_gather(params.at("pos.table"), pos_ids));

  // Additive attention mask, shared by every example and layer.
  const std::vector<uint8_t> visible = build_causal_mask(n, m);
  std::vector<double> mask_add(visible.size());
  for (size_t i = 0; i < visible.size(); ++i) mask_add[i] = visible[i] ? 0.0 : kAttnMaskValue;
  Tensor attn_mask = g.constant({seq, seq}, mask_add);

  for (int l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    Tensor h = g.layer_norm(x, params.at(prefix + "ln1.gain"), params.at(prefix + "ln1.bias"),
                            kLayerNormEps);
    Tensor q = g.add_rows(g.matmul(h, params.at(prefix + "attn.wq")), params.at(prefix + "attn.bq"));
    Tensor k = g.add_rows(g.matmul(h, params.at(prefix + "attn.wk")), params.at(prefix + "attn.bk"));
    Tensor v = g.add_rows(g.matmul(h, params.at(prefix + "attn.wv")), params.at(prefix + "attn.bv"));

    Tensor ctx = g.multihead_attention(q, k, v, attn_mask, b, heads);
    Tensor attn_out = g.add_rows(g.matmul(ctx, params.at(prefix + "attn.wo")),
                                 params.at(prefix + "attn.bo"));
    x = g.add(x, attn_out);

    Tensor h2 = g.layer_norm(x, params.at(prefix + "ln2.gain"), params.at(prefix + "ln2.bias"),
                             kLayerNormEps);
    Tensor mid = g.gelu(g.add_rows(g.matmul(h2, params.at(prefix + "mlp.w1")),
                                   params.at(prefix + "mlp.b1")));
    Tensor mlp_out = g.add_rows(g.matmul(mid, params.at(prefix + "mlp.w2")),
                                params.at(prefix + "mlp.b2"));
    x = g.add(x, mlp_out);
  }

  // Hidden-state outputs come from the residual stream after the last block;
  // the final norm belongs to the logit path only.
  std::vector<Tensor> img_rows, sum_rows, text_rows, logit_rows;
  img_rows.reserve(static_cast<size_t>(b));
  sum_rows.reserve(static_cast<size_t>(b));
  text_rows.reserve(static_cast<size_t>(b));
  logit_rows.reserve(static_cast<size_t>(b));
  for (int e = 0; e < b; ++e) {
    const int64_t r0 = static_cast<int64_t>(e) * seq;
    img_rows.push_back(g.slice_rows(x, r0, r0 + n));
    sum_rows.push_back(g.slice_rows(x, r0 + n - 1, r0 + n));
    text_rows.push_back(g.slice_rows(x, r0 + n, r0 + seq));
    // Position n-1+t predicts text token t (1-based): rows n-1 .. n+m-2.
    logit_rows.push_back(g.slice_rows(x, r0 + n - 1, r0 + n - 1 + m));
  }
  out.image_hidden = g.concat_rows(img_rows);
  out.image_summary = g.concat_rows(sum_rows);
  out.text_hidden = g.concat_rows(text_rows);
  Tensor pred_states = g.layer_norm(g.concat_rows(logit_rows), params.at("final_ln.gain"),
                                    params.at("final_ln.bias"), kLayerNormEps);
  out.logits = g.add_rows(g.matmul(pred_states, params.at("head.w")), params.at("head.b"));
  return out;
}

}  // namespace vista

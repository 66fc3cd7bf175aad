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

#include "vista/losses.hpp"

#include <algorithm>

namespace vista {

namespace {

// Per-row alignment weights for the whole batch: weight of row (e, t) is
// f(t_eff)/m_eff scaled by 1/contributing_examples, zero where unsupervised.
std::vector<double> alignment_row_weights(std::span<const uint8_t> mask,
                                          const WeightScheme& scheme, int batch, int m) {
  require(static_cast<size_t>(batch) * m == mask.size(), ErrorKind::kInvalid,
          "alignment weights: mask extent mismatch");
  std::vector<double> w(mask.size(), 0.0);
  int contributing = 0;
  for (int e = 0; e < batch; ++e) {
    const size_t off = static_cast<size_t>(e) * m;
    int m_eff = 0;
    for (int t = 0; t < m; ++t) m_eff += mask[off + t] ? 1 : 0;
    if (m_eff == 0) continue;
    ++contributing;
    int t_eff = 0;
    for (int t = 0; t < m; ++t) {
      if (!mask[off + t]) continue;
      ++t_eff;
      w[off + t] = vista_weight(t_eff, m_eff, scheme) / m_eff;
    }
  }
  require(contributing > 0, ErrorKind::kInvalid,
          "alignment loss requires at least one supervised position");
  for (double& x : w) x /= contributing;
  return w;
}

}  // namespace

WeightScheme WeightScheme::uniform(double c) {
  require(c >= 0.0, ErrorKind::kInvalid, "uniform weight constant must be >= 0");
  return {Kind::kUniform, c};
}

double vista_weight(int t, int m, const WeightScheme& scheme) {
  require(m >= 1, ErrorKind::kInvalid, "vista_weight: m must be >= 1");
  require(1 <= t && t <= m, ErrorKind::kInvalid,
          "vista_weight: position " + std::to_string(t) + " outside [1, " + std::to_string(m) + "]");
  switch (scheme.kind) {
    case WeightScheme::Kind::kNormalized:
      return static_cast<double>(t) / static_cast<double>(m);
    case WeightScheme::Kind::kLinear:
      return static_cast<double>(t);
    case WeightScheme::Kind::kUniform:
      return scheme.c;
  }
  fail(ErrorKind::kInvalid, "vista_weight: unknown scheme");
}

std::vector<double> vista_weights(int m, const WeightScheme& scheme) {
  std::vector<double> w(static_cast<size_t>(m));
  for (int t = 1; t <= m; ++t) w[static_cast<size_t>(t - 1)] = vista_weight(t, m, scheme);
  return w;
}

double vista_weight_mean(int m, const WeightScheme& scheme) {
  require(m >= 1, ErrorKind::kInvalid, "vista_weight_mean: m must be >= 1");
  const int64_t numer = static_cast<int64_t>(m) * (m + 1) / 2;  // sum of 1..m, exact
  switch (scheme.kind) {
    case WeightScheme::Kind::kNormalized:
      return static_cast<double>(numer) / (static_cast<double>(m) * static_cast<double>(m));
    case WeightScheme::Kind::kLinear:
      return static_cast<double>(numer) / static_cast<double>(m);
    case WeightScheme::Kind::kUniform:
      return scheme.c;
  }
  fail(ErrorKind::kInvalid, "vista_weight_mean: unknown scheme");
}

Tensor cross_entropy(Graph& g, const Tensor& logits, std::span<const int> targets,
                     std::span<const uint8_t> mask) {
  const int64_t rows = shape_rows(logits.shape());
  require(static_cast<int64_t>(targets.size()) == rows &&
              static_cast<int64_t>(mask.size()) == rows,
          ErrorKind::kInvalid, "cross_entropy: one target and mask entry per row required");
  int64_t count = 0;
  for (uint8_t b : mask) count += b ? 1 : 0;
  require(count > 0, ErrorKind::kInvalid, "cross_entropy: empty supervision mask");

  Tensor logp = g.log_softmax(logits);
  Tensor picked = g.pick(logp, targets);
  std::vector<double> w(static_cast<size_t>(rows), 0.0);
  const double scale = -1.0 / static_cast<double>(count);
  for (int64_t i = 0; i < rows; ++i) {
    if (mask[static_cast<size_t>(i)]) w[static_cast<size_t>(i)] = scale;
  }
  return g.weighted_sum(picked, w);
}

Tensor vista_l2_loss(Graph& g, const Tensor& text_repr, const Tensor& image_summary,
                     std::span<const uint8_t> mask, const WeightScheme& scheme,
                     int batch, int m) {
  const std::vector<double> w = alignment_row_weights(mask, scheme, batch, m);
  return g.group_weighted_sqdist(text_repr, image_summary, w, m);
}

Tensor vista_cosine_loss(Graph& g, const Tensor& text_repr, const Tensor& image_summary,
                         std::span<const uint8_t> mask, const WeightScheme& scheme,
                         int batch, int m, double eps) {
  const std::vector<double> w = alignment_row_weights(mask, scheme, batch, m);
  return g.scale(g.group_weighted_cosine(text_repr, image_summary, w, m, eps), -1.0);
}

LossReport total_loss(Graph& g, const ForwardOutput& fwd, const MultimodalBatch& batch,
                      const LossOptions& options) {
  LossReport report;
  report.weights = vista_weights(batch.m, options.scheme);
  report.supervised_count = 0;
  for (uint8_t b : batch.loss_mask) report.supervised_count += b ? 1 : 0;

  report.ce = cross_entropy(g, fwd.logits, batch.text_ids, batch.loss_mask);

  const Tensor& repr =
      options.text_repr == TextRepr::kEmbedding ? fwd.text_embeddings : fwd.text_hidden;
  switch (options.variant) {
    case VistaVariant::kL2:
      report.vista = vista_l2_loss(g, repr, fwd.image_summary, batch.loss_mask,
                                   options.scheme, batch.batch, batch.m);
      break;
    case VistaVariant::kCosine:
      report.vista = vista_cosine_loss(g, repr, fwd.image_summary, batch.loss_mask,
                                       options.scheme, batch.batch, batch.m,
                                       options.cosine_eps);
      break;
    case VistaVariant::kNone:
      report.vista = g.zeros({1});
      break;
  }
  if (options.vista_scale != 1.0) {
    report.vista = g.scale(report.vista, options.vista_scale);
  }
  report.total = g.add(report.ce, report.vista);
  return report;
}

}  // namespace vista

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

#include "vista/training.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace vista {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<double> softmax_mix(std::span<const double> logits, double uniform_mix) {
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  std::vector<double> p(logits.size());
  double denom = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    denom += p[i];
  }
  const double u = uniform_mix / static_cast<double>(logits.size());
  for (double& x : p) x = (1.0 - uniform_mix) * (x / denom) + u;
  return p;
}

double cosine_scalar(std::span<const double> a, std::span<const double> b, double eps) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps));
}

struct HoldoutMetrics {
  double ce = 0.0;
  double mean_alignment = 0.0;
};

HoldoutMetrics evaluate_holdout(const ModelConfig& config, const ParamStore& params,
                                std::span<const MultimodalBatch> batches,
                                TextRepr text_repr) {
  double ce_sum = 0.0;
  double align_sum = 0.0;
  int64_t count = 0;
  Graph g;
  for (const auto& batch : batches) {
    g.reset();
    BoundParams bound = bind_params(g, params, false);
    ForwardOutput fwd = forward(g, config, bound, batch);
    Tensor ce = cross_entropy(g, fwd.logits, batch.text_ids, batch.loss_mask);
    int64_t batch_count = 0;
    for (uint8_t b : batch.loss_mask) batch_count += b ? 1 : 0;
    ce_sum += ce.scalar() * static_cast<double>(batch_count);
    const AlignmentEval eval = alignment_from_output(fwd, batch.loss_mask, text_repr);
    align_sum += eval.mean * static_cast<double>(batch_count);
    count += batch_count;
  }
  require(count > 0, ErrorKind::kInvalid, "holdout set has no supervised positions");
  return {ce_sum / static_cast<double>(count), align_sum / static_cast<double>(count)};
}

}  // namespace

TaskSpec TaskSpec::make(int latent_size, int vocab_size, int text_len, int n_image_tokens,
                        int d_image_feat, double feature_noise, uint64_t seed) {
  TaskSpec task;
  task.latent_size = latent_size;
  task.vocab_size = vocab_size;
  task.text_len = text_len;
  task.n_image_tokens = n_image_tokens;
  task.d_image_feat = d_image_feat;
  task.feature_noise = feature_noise;
  task.seed = seed;

  require(latent_size >= 1 && vocab_size >= 2 && text_len >= 1 && n_image_tokens >= 1 &&
              d_image_feat >= 1,
          ErrorKind::kInvalid, "TaskSpec: all extents must be >= 1 (vocab >= 2)");
  require(std::isfinite(feature_noise) && feature_noise >= 0.0, ErrorKind::kInvalid,
          "TaskSpec: feature noise must be finite and >= 0");

  Rng rng(seed);

  const size_t feat_width = static_cast<size_t>(n_image_tokens) * d_image_feat;
  task.feature_codebook.resize(static_cast<size_t>(latent_size) * feat_width);
  for (double& x : task.feature_codebook) x = rng.normal(0.0, 1.0);

  // Caption generator: a shared random backbone chain plus a latent-keyed
  // bump, mixed with uniform mass so every conditional keeps entropy.
  DiscreteSequenceModel& cap = task.caption;
  cap.latent_size = latent_size;
  cap.vocab_size = vocab_size;
  cap.horizon = text_len;
  cap.prior.assign(static_cast<size_t>(latent_size), 1.0 / latent_size);

  std::vector<double> init_logits(static_cast<size_t>(vocab_size));
  for (double& x : init_logits) x = rng.normal(0.0, 1.0);
  std::vector<double> trans_logits(static_cast<size_t>(vocab_size) * vocab_size);
  for (double& x : trans_logits) x = rng.normal(0.0, 1.0);

  cap.initial.resize(static_cast<size_t>(latent_size) * vocab_size);
  for (int z = 0; z < latent_size; ++z) {
    std::vector<double> logits = init_logits;
    logits[static_cast<size_t>((7 * z + 3) % vocab_size)] += 2.5;
    const auto row = softmax_mix(logits, 0.10);
    std::copy(row.begin(), row.end(), cap.initial.begin() + static_cast<size_t>(z) * vocab_size);
  }
  cap.transition.resize(static_cast<size_t>(latent_size) * vocab_size * vocab_size);
  for (int z = 0; z < latent_size; ++z) {
    for (int s = 0; s < vocab_size; ++s) {
      std::vector<double> logits(trans_logits.begin() + static_cast<size_t>(s) * vocab_size,
                                 trans_logits.begin() + static_cast<size_t>(s + 1) * vocab_size);
      logits[static_cast<size_t>((s + 3 * z + 1) % vocab_size)] += 2.5;
      const auto row = softmax_mix(logits, 0.20);
      std::copy(row.begin(), row.end(),
                cap.transition.begin() + (static_cast<size_t>(z) * vocab_size + s) * vocab_size);
    }
  }
  task.validate();
  return task;
}

void TaskSpec::validate() const {
  caption.validate();
  require(caption.latent_size == latent_size && caption.vocab_size == vocab_size,
          ErrorKind::kInvalid, "TaskSpec: caption model extents mismatch");
  require(caption.horizon == text_len, ErrorKind::kInvalid,
          "TaskSpec: caption horizon must equal text_len");
  require(feature_codebook.size() ==
              static_cast<size_t>(latent_size) * n_image_tokens * d_image_feat,
          ErrorKind::kInvalid, "TaskSpec: codebook extent mismatch");
  require(std::isfinite(feature_noise) && feature_noise >= 0.0, ErrorKind::kInvalid,
          "TaskSpec: feature noise must be finite and >= 0");
}

void TrainConfig::validate() const {
  model.validate();
  require(steps >= 1, ErrorKind::kInvalid, "TrainConfig: steps must be >= 1");
  require(batch_size >= 1, ErrorKind::kInvalid, "TrainConfig: batch_size must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::kInvalid,
          "TrainConfig: learning rate must be positive");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kInvalid,
          "TrainConfig: momentum must lie in [0, 1)");
  require(eval_interval >= 1, ErrorKind::kInvalid, "TrainConfig: eval_interval must be >= 1");
}

MultimodalBatch synth_batch(const TaskSpec& task, Rng& rng, int count,
                            std::vector<int>* latents_out) {
  task.validate();
  require(count >= 1, ErrorKind::kInvalid, "synth_batch: count must be >= 1");

  MultimodalBatch batch;
  batch.batch = count;
  batch.n = task.n_image_tokens;
  batch.m = task.text_len;
  batch.d_image_feat = task.d_image_feat;
  const size_t feat_width = static_cast<size_t>(batch.n) * batch.d_image_feat;
  batch.image_features.resize(static_cast<size_t>(count) * feat_width);
  batch.text_ids.resize(static_cast<size_t>(count) * batch.m);
  batch.loss_mask.assign(static_cast<size_t>(count) * batch.m, 1);
  if (latents_out) latents_out->resize(static_cast<size_t>(count));

  const int v = task.vocab_size;
  for (int e = 0; e < count; ++e) {
    const int z = rng.categorical(task.caption.prior);
    if (latents_out) (*latents_out)[static_cast<size_t>(e)] = z;

    double* feat = batch.image_features.data() + static_cast<size_t>(e) * feat_width;
    const double* code = task.feature_codebook.data() + static_cast<size_t>(z) * feat_width;
    for (size_t i = 0; i < feat_width; ++i) {
      feat[i] = code[i];
      if (task.feature_noise > 0.0) feat[i] += task.feature_noise * rng.normal(0.0, 1.0);
    }

    int prev = -1;
    for (int t = 0; t < batch.m; ++t) {
      std::span<const double> dist =
          t == 0 ? std::span<const double>(task.caption.initial.data() + static_cast<size_t>(z) * v,
                                           static_cast<size_t>(v))
                 : std::span<const double>(
                       task.caption.transition.data() +
                           (static_cast<size_t>(z) * v + static_cast<size_t>(prev)) * v,
                       static_cast<size_t>(v));
      prev = rng.categorical(dist);
      batch.text_ids[static_cast<size_t>(e) * batch.m + t] = prev;
    }
  }
  return batch;
}

void sgd_step(ParamStore& params, double learning_rate, double momentum) {
  require(learning_rate > 0.0, ErrorKind::kInvalid, "sgd_step: learning rate must be positive");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kInvalid,
          "sgd_step: momentum must lie in [0, 1)");
  for (auto& p : params.all()) {
    for (size_t i = 0; i < p.value.size(); ++i) {
      p.momentum[i] = momentum * p.momentum[i] + p.grad[i];
      p.value[i] -= learning_rate * p.momentum[i];
    }
  }
}

AlignmentEval alignment_from_output(const ForwardOutput& fwd, std::span<const uint8_t> mask,
                                    TextRepr text_repr) {
  const Tensor& repr = text_repr == TextRepr::kEmbedding ? fwd.text_embeddings : fwd.text_hidden;
  const int d = shape_cols(repr.shape());
  const std::span<const double> xs = repr.value();
  const std::span<const double> ss = fwd.image_summary.value();

  AlignmentEval eval;
  eval.per_position.assign(static_cast<size_t>(fwd.m), 0.0);
  std::vector<int64_t> per_position_count(static_cast<size_t>(fwd.m), 0);
  double total = 0.0;
  int64_t count = 0;
  for (int e = 0; e < fwd.batch; ++e) {
    for (int t = 0; t < fwd.m; ++t) {
      const size_t row = static_cast<size_t>(e) * fwd.m + t;
      if (!mask[row]) continue;
      const double sim = cosine_scalar(xs.subspan(row * d, static_cast<size_t>(d)),
                                       ss.subspan(static_cast<size_t>(e) * d, static_cast<size_t>(d)),
                                       1e-12);
      total += sim;
      ++count;
      eval.per_position[static_cast<size_t>(t)] += sim;
      ++per_position_count[static_cast<size_t>(t)];
    }
  }
  require(count > 0, ErrorKind::kInvalid, "alignment: no supervised positions");
  eval.mean = total / static_cast<double>(count);
  for (int t = 0; t < fwd.m; ++t) {
    if (per_position_count[static_cast<size_t>(t)] > 0) {
      eval.per_position[static_cast<size_t>(t)] /=
          static_cast<double>(per_position_count[static_cast<size_t>(t)]);
    }
  }
  return eval;
}

AlignmentEval eval_alignment(const ModelConfig& config, const ParamStore& params,
                             std::span<const MultimodalBatch> batches, TextRepr text_repr) {
  require(!batches.empty(), ErrorKind::kInvalid, "eval_alignment: need at least one batch");
  AlignmentEval agg;
  agg.per_position.assign(static_cast<size_t>(batches[0].m), 0.0);
  std::vector<int64_t> pos_count(agg.per_position.size(), 0);
  double total = 0.0;
  int64_t count = 0;
  Graph g;
  for (const auto& batch : batches) {
    g.reset();
    BoundParams bound = bind_params(g, params, false);
    ForwardOutput fwd = forward(g, config, bound, batch);
    const AlignmentEval one = alignment_from_output(fwd, batch.loss_mask, text_repr);
    int64_t batch_count = 0;
    for (uint8_t b : batch.loss_mask) batch_count += b ? 1 : 0;
    total += one.mean * static_cast<double>(batch_count);
    count += batch_count;
    for (size_t t = 0; t < one.per_position.size(); ++t) {
      int64_t col = 0;
      for (int e = 0; e < batch.batch; ++e)
        col += batch.loss_mask[static_cast<size_t>(e) * batch.m + t] ? 1 : 0;
      agg.per_position[t] += one.per_position[t] * static_cast<double>(col);
      pos_count[t] += col;
    }
  }
  agg.mean = total / static_cast<double>(count);
  for (size_t t = 0; t < agg.per_position.size(); ++t) {
    if (pos_count[t] > 0) agg.per_position[t] /= static_cast<double>(pos_count[t]);
  }
  return agg;
}

std::vector<MultimodalBatch> make_holdout(const TaskSpec& task, int batch_size) {
  Rng rng(task.seed ^ kHoldoutSeedSalt);
  std::vector<MultimodalBatch> batches;
  int remaining = kHoldoutSamples;
  while (remaining > 0) {
    const int take = std::min(remaining, batch_size);
    batches.push_back(synth_batch(task, rng, take));
    remaining -= take;
  }
  return batches;
}

TrainResult train(const TaskSpec& task, const TrainConfig& config) {
  task.validate();
  config.validate();
  require(task.vocab_size == config.model.vocab_size, ErrorKind::kInvalid,
          "train: task and model vocab sizes differ");
  require(task.n_image_tokens == config.model.n_image_tokens, ErrorKind::kInvalid,
          "train: task and model image-token counts differ");
  require(task.d_image_feat == config.model.d_image_feat, ErrorKind::kInvalid,
          "train: task and model feature widths differ");
  require(task.text_len <= config.model.max_text_len, ErrorKind::kInvalid,
          "train: task text length exceeds max_text_len");

  TrainResult result;
  result.params = init_params(config.model);
  // Large eval chunks amortize per-forward overhead; chunking is metric-neutral
  // up to summation order and fixed per task.
  const std::vector<MultimodalBatch> holdout = make_holdout(task, 256);
  Rng data_rng(config.seed);

  Graph g;
  int64_t last_good = -1;
  const auto record_point = [&](int64_t step, const LossReport& report) {
    const HoldoutMetrics hm =
        evaluate_holdout(config.model, result.params, holdout, config.loss.text_repr);
    MetricsRecord rec;
    rec.step = step;
    rec.ce = report.ce.scalar();
    rec.vista = report.vista.scalar();
    rec.total = report.total.scalar();
    rec.mean_alignment = hm.mean_alignment;
    rec.holdout_ce = hm.ce;
    for (double v : {rec.ce, rec.vista, rec.total, rec.mean_alignment, rec.holdout_ce}) {
      require(std::isfinite(v), ErrorKind::kDiverged, "non-finite metric value");
    }
    result.trace.records.push_back(rec);
  };

  try {
    for (int step = 0; step < config.steps; ++step) {
      const MultimodalBatch batch = synth_batch(task, data_rng, config.batch_size);
      g.reset();
      BoundParams bound = bind_params(g, result.params, true);
      const ForwardOutput fwd = forward(g, config.model, bound, batch);
      const LossReport report = total_loss(g, fwd, batch, config.loss);
      if (step % config.eval_interval == 0) record_point(step, report);
      g.backward(report.total);
      auto& plist = result.params.all();
      for (size_t i = 0; i < plist.size(); ++i) {
        const std::span<const double> grad = bound.leaves[i].grad();
        std::copy(grad.begin(), grad.end(), plist[i].grad.begin());
      }
      sgd_step(result.params, config.learning_rate, config.momentum);
      result.params.zero_grad();
      for (const auto& p : result.params.all()) {
        for (double v : p.value) {
          require(std::isfinite(v), ErrorKind::kDiverged,
                  "parameter '" + p.name + "' became non-finite");
        }
      }
      last_good = step;
    }
    // Closing probe on a fresh batch; no update is applied.
    const MultimodalBatch batch = synth_batch(task, data_rng, config.batch_size);
    g.reset();
    BoundParams bound = bind_params(g, result.params, false);
    const ForwardOutput fwd = forward(g, config.model, bound, batch);
    const LossReport report = total_loss(g, fwd, batch, config.loss);
    record_point(config.steps, report);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kDiverged) {
      fail(ErrorKind::kDiverged, "training diverged after step " + std::to_string(last_good) +
                                     ": " + e.what());
    }
    throw;
  }
  return result;
}

namespace {

std::string loss_label(const LossOptions& options) {
  std::string label = options.variant == VistaVariant::kL2       ? "l2"
                      : options.variant == VistaVariant::kCosine ? "cosine"
                                                                 : "none";
  label += "/";
  switch (options.scheme.kind) {
    case WeightScheme::Kind::kNormalized: label += "normalized"; break;
    case WeightScheme::Kind::kLinear: label += "linear"; break;
    case WeightScheme::Kind::kUniform:
      label += "uniform(" + std::to_string(options.scheme.c) + ")";
      break;
  }
  return label;
}

}  // namespace

GradCheckReport model_gradcheck(const ModelConfig& config, const MultimodalBatch& batch,
                                std::span<const LossOptions> combos, double h,
                                double backward_perturbation) {
  require(h >= 1e-7 && h <= 1e-3, ErrorKind::kInvalid,
          "model_gradcheck: step must lie in [1e-7, 1e-3]");
  ParamStore params = init_params(config);

  const auto total_at = [&](const ParamStore& p, const LossOptions& options) {
    Graph g;
    BoundParams bound = bind_params(g, p, false);
    const ForwardOutput fwd = forward(g, config, bound, batch);
    return total_loss(g, fwd, batch, options).total.scalar();
  };

  GradCheckReport report;
  report.all_pass = true;
  for (const LossOptions& options : combos) {
    GradCheckEntry entry;
    entry.label = loss_label(options);
    const bool vista_vacuous = options.variant == VistaVariant::kNone ||
                               (options.scheme.kind == WeightScheme::Kind::kUniform &&
                                options.scheme.c == 0.0);
    if (vista_vacuous && options.variant != VistaVariant::kNone) {
      entry.skipped = true;  // uniform(0): alignment term contributes nothing
      report.entries.push_back(std::move(entry));
      continue;
    }

    Graph g;
    g.debug_seed_perturbation = backward_perturbation;
    BoundParams bound = bind_params(g, params, true);
    const ForwardOutput fwd = forward(g, config, bound, batch);
    const LossReport loss = total_loss(g, fwd, batch, options);
    g.backward(loss.total);

    double max_rel_err = 0.0;
    auto& plist = params.all();
    for (size_t pi = 0; pi < plist.size(); ++pi) {
      const std::span<const double> analytic = bound.leaves[pi].grad();
      for (size_t i = 0; i < plist[pi].value.size(); ++i) {
        const double saved = plist[pi].value[i];
        plist[pi].value[i] = saved + h;
        const double fp = total_at(params, options);
        plist[pi].value[i] = saved - h;
        const double fm = total_at(params, options);
        plist[pi].value[i] = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        max_rel_err = std::max(max_rel_err, err);
      }
    }
    entry.max_rel_err = max_rel_err;
    report.worst = std::max(report.worst, max_rel_err);
    if (max_rel_err >= kGradCheckTolerance) report.all_pass = false;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

void write_metrics_jsonl(const std::string& path, const MetricsTrace& trace) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::kIo, "cannot open for writing: " + path);
  for (const auto& r : trace.records) {
    ordered_json j;
    j["step"] = r.step;
    j["ce"] = r.ce;
    j["vista"] = r.vista;
    j["total"] = r.total;
    j["mean_alignment"] = r.mean_alignment;
    j["holdout_ce"] = r.holdout_ce;
    f << j.dump() << '\n';
  }
  require(f.good(), ErrorKind::kIo, "write failed: " + path);
}

MetricsTrace read_metrics_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::kIo, "cannot open metrics file: " + path);
  MetricsTrace trace;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line, nullptr, false);
    require(!j.is_discarded(), ErrorKind::kParse, "bad metrics line: " + line);
    MetricsRecord r;
    r.step = j.at("step").get<int64_t>();
    r.ce = j.at("ce").get<double>();
    r.vista = j.at("vista").get<double>();
    r.total = j.at("total").get<double>();
    r.mean_alignment = j.at("mean_alignment").get<double>();
    r.holdout_ce = j.at("holdout_ce").get<double>();
    trace.records.push_back(r);
  }
  return trace;
}

}  // namespace vista

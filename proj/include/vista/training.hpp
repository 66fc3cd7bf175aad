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

#ifndef VISTA_TRAINING_HPP_
#define VISTA_TRAINING_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "vista/infotheory.hpp"
#include "vista/losses.hpp"
#include "vista/model.hpp"
#include "vista/rng.hpp"

namespace vista {

// Synthetic captioning: a latent class z selects one row of a fixed feature
// codebook (the frozen "vision encoder" output, plus optional Gaussian noise)
// and drives a latent-conditioned Markov caption model.
struct TaskSpec {
  int latent_size = 6;
  int vocab_size = 32;
  int text_len = 16;
  int n_image_tokens = 8;
  int d_image_feat = 16;
  double feature_noise = 0.05;
  uint64_t seed = 1234;

  DiscreteSequenceModel caption;          // horizon == text_len
  std::vector<double> feature_codebook;   // latent_size x (n_image_tokens*d_image_feat)

  static TaskSpec make(int latent_size, int vocab_size, int text_len, int n_image_tokens,
                       int d_image_feat, double feature_noise, uint64_t seed);
  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  LossOptions loss;
  int steps = 5000;
  int batch_size = 32;
  double learning_rate = 3e-3;
  double momentum = 0.9;
  int eval_interval = 250;
  uint64_t seed = 99;

  void validate() const;
};

struct MetricsRecord {
  int64_t step = 0;
  double ce = 0.0;
  double vista = 0.0;
  double total = 0.0;
  double mean_alignment = 0.0;
  double holdout_ce = 0.0;
};

struct MetricsTrace {
  std::vector<MetricsRecord> records;
};

MultimodalBatch synth_batch(const TaskSpec& task, Rng& rng, int count,
                            std::vector<int>* latents_out = nullptr);

// v <- momentum*v + g; p <- p - lr*v, in parameter order. Gradients are left
// untouched; callers zero them between steps.
void sgd_step(ParamStore& params, double learning_rate, double momentum);

struct TrainResult {
  MetricsTrace trace;
  ParamStore params;
};

TrainResult train(const TaskSpec& task, const TrainConfig& config);

struct AlignmentEval {
  double mean = 0.0;
  std::vector<double> per_position;  // length m
};

AlignmentEval eval_alignment(const ModelConfig& config, const ParamStore& params,
                             std::span<const MultimodalBatch> batches,
                             TextRepr text_repr = TextRepr::kEmbedding);

// Alignment statistics straight from a forward pass (mean over supervised
// positions of cos(x_t, image summary)).
AlignmentEval alignment_from_output(const ForwardOutput& fwd, std::span<const uint8_t> mask,
                                    TextRepr text_repr = TextRepr::kEmbedding);

struct GradCheckEntry {
  std::string label;
  double max_rel_err = 0.0;
  bool skipped = false;  // vista term identically zero, nothing to audit
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool all_pass = false;  // every non-skipped entry below the tolerance
};

inline constexpr double kGradCheckTolerance = 1e-4;

// Central-difference audit of d(total_loss)/d(parameters) for each loss
// configuration. `backward_perturbation` feeds Graph::debug_seed_perturbation
// (negative control).
GradCheckReport model_gradcheck(const ModelConfig& config, const MultimodalBatch& batch,
                                std::span<const LossOptions> combos, double h,
                                double backward_perturbation = 0.0);

// One JSON object per record with keys
// {step, ce, vista, total, mean_alignment, holdout_ce}.
void write_metrics_jsonl(const std::string& path, const MetricsTrace& trace);
MetricsTrace read_metrics_jsonl(const std::string& path);

// Held-out set size and seed salt are fixed so evaluations are comparable
// across runs of the same task.
inline constexpr int kHoldoutSamples = 1024;
inline constexpr uint64_t kHoldoutSeedSalt = 0x486f6c646f757421ull;

std::vector<MultimodalBatch> make_holdout(const TaskSpec& task, int batch_size);

}  // namespace vista

#endif  // VISTA_TRAINING_HPP_

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

#include <cmath>
#include <cstdio>
#include <set>
#include <vector>

#include "doctest.h"
#include "vista/training.hpp"

using namespace vista;

namespace {

TaskSpec small_task(uint64_t seed = 1234) { return TaskSpec::make(3, 16, 8, 4, 8, 0.05, seed); }

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.model.vocab_size = 16;
  cfg.model.d_model = 16;
  cfg.model.n_layers = 2;
  cfg.model.n_heads = 2;
  cfg.model.n_image_tokens = 4;
  cfg.model.max_text_len = 8;
  cfg.model.d_image_feat = 8;
  cfg.model.seed = 7;
  cfg.steps = 60;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  cfg.momentum = 0.9;
  cfg.eval_interval = 20;
  cfg.seed = 99;
  return cfg;
}

bool traces_equal(const MetricsTrace& a, const MetricsTrace& b) {
  if (a.records.size() != b.records.size()) return false;
  for (size_t i = 0; i < a.records.size(); ++i) {
    const auto& x = a.records[i];
    const auto& y = b.records[i];
    if (x.step != y.step || x.ce != y.ce || x.vista != y.vista || x.total != y.total ||
        x.mean_alignment != y.mean_alignment || x.holdout_ce != y.holdout_ce)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("synth_batch is reproducible and noiseless features collapse to the codebook") {
  TaskSpec task = TaskSpec::make(2, 16, 8, 4, 8, 0.0, 77);
  Rng r1(5), r2(5);
  const MultimodalBatch a = synth_batch(task, r1, 64);
  const MultimodalBatch b = synth_batch(task, r2, 64);
  CHECK(a.image_features == b.image_features);
  CHECK(a.text_ids == b.text_ids);

  std::set<std::vector<double>> distinct;
  const size_t width = static_cast<size_t>(a.n) * a.d_image_feat;
  for (int e = 0; e < a.batch; ++e) {
    distinct.insert(std::vector<double>(a.image_features.begin() + e * width,
                                        a.image_features.begin() + (e + 1) * width));
  }
  CHECK(distinct.size() == 2);
}

TEST_CASE("synth_batch token frequencies match the exact model marginals") {
  TaskSpec task = TaskSpec::make(2, 5, 4, 2, 3, 0.0, 2024);
  // Exact P(x_1 = x) from the caption model.
  std::vector<double> expect(5, 0.0);
  for (int z = 0; z < 2; ++z)
    for (int x = 0; x < 5; ++x)
      expect[static_cast<size_t>(x)] +=
          task.caption.prior[static_cast<size_t>(z)] *
          task.caption.initial[static_cast<size_t>(z) * 5 + x];

  Rng rng(31337);
  const int samples = 100000;
  std::vector<int> counts(5, 0);
  const MultimodalBatch batch = synth_batch(task, rng, samples);
  for (int e = 0; e < samples; ++e) ++counts[static_cast<size_t>(batch.text_ids[e * 4])];

  for (int x = 0; x < 5; ++x) {
    const double p = expect[static_cast<size_t>(x)];
    const double sigma = std::sqrt(p * (1.0 - p) * samples);
    CHECK(std::abs(counts[static_cast<size_t>(x)] - p * samples) <= 3.0 * sigma + 1.0);
  }
}

TEST_CASE("sgd_step recurrences") {
  ModelConfig mc;
  mc.vocab_size = 4;
  mc.d_model = 2;
  mc.n_layers = 1;
  mc.n_heads = 1;
  mc.n_image_tokens = 1;
  mc.max_text_len = 2;
  mc.d_image_feat = 2;
  ParamStore store = init_params(mc);

  // mu = 0: plain gradient descent.
  ParamStore plain = store;
  for (auto& p : plain.all())
    for (auto& gv : p.grad) gv = 0.5;
  std::vector<double> before = plain.all()[0].value;
  sgd_step(plain, 0.1, 0.0);
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(plain.all()[0].value[i] == doctest::Approx(before[i] - 0.05).epsilon(1e-15));

  // Zero gradient, zero momentum: parameters unchanged.
  ParamStore frozen = store;
  before = frozen.all()[0].value;
  sgd_step(frozen, 0.1, 0.9);
  CHECK(frozen.all()[0].value == before);

  // Two steps with momentum vs the hand-unrolled recurrence.
  ParamStore rolled = store;
  const double g1 = 0.5, g2 = -0.25, lr = 0.1, mu = 0.9;
  for (auto& p : rolled.all())
    for (auto& gv : p.grad) gv = g1;
  sgd_step(rolled, lr, mu);
  for (auto& p : rolled.all())
    for (auto& gv : p.grad) gv = g2;
  sgd_step(rolled, lr, mu);
  const double v1 = g1;
  const double v2 = mu * v1 + g2;
  const double expect_delta = -lr * (v1 + v2);
  CHECK(rolled.all()[0].value[0] ==
        doctest::Approx(store.all()[0].value[0] + expect_delta).epsilon(1e-12));
}

TEST_CASE("training is deterministic and logs the loss identity") {
  const TaskSpec task = small_task();
  const TrainConfig cfg = small_config();
  const TrainResult a = train(task, cfg);
  const TrainResult b = train(task, cfg);
  CHECK(traces_equal(a.trace, b.trace));
  REQUIRE(a.trace.records.size() == 4);  // steps 0, 20, 40, plus the closing probe
  CHECK(a.trace.records.back().step == 60);
  for (const auto& r : a.trace.records) {
    CHECK(r.total == r.ce + r.vista);
    CHECK(r.vista >= 0.0);  // l2 variant
  }
}

TEST_CASE("variant none matches a uniform(0) run bitwise and logs zero vista") {
  const TaskSpec task = small_task();
  TrainConfig none_cfg = small_config();
  none_cfg.loss.variant = VistaVariant::kNone;
  TrainConfig uniform0_cfg = small_config();
  uniform0_cfg.loss.variant = VistaVariant::kL2;
  uniform0_cfg.loss.scheme = WeightScheme::uniform(0.0);

  const TrainResult none_run = train(task, none_cfg);
  const TrainResult uniform0_run = train(task, uniform0_cfg);

  for (const auto& r : none_run.trace.records) CHECK(r.vista == 0.0);
  CHECK(traces_equal(none_run.trace, uniform0_run.trace));
  REQUIRE(none_run.params.all().size() == uniform0_run.params.all().size());
  for (size_t i = 0; i < none_run.params.all().size(); ++i) {
    CHECK(none_run.params.all()[i].value == uniform0_run.params.all()[i].value);
  }
}

TEST_CASE("non-positive learning rate is rejected") {
  const TaskSpec task = small_task();
  TrainConfig cfg = small_config();
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train(task, cfg), Error);
}

TEST_CASE("learning happens on the smoke run") {
  const TaskSpec task = small_task();
  TrainConfig cfg = small_config();
  cfg.steps = 300;
  cfg.eval_interval = 100;
  const TrainResult run = train(task, cfg);
  CHECK(run.trace.records.back().ce < run.trace.records.front().ce);
  CHECK(run.trace.records.back().holdout_ce < run.trace.records.front().holdout_ce);
}

TEST_CASE("divergent training reports the last good step") {
  const TaskSpec task = small_task();
  TrainConfig cfg = small_config();
  cfg.learning_rate = 1e6;
  try {
    train(task, cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDiverged);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("alignment evaluation endpoints") {
  const TaskSpec task = small_task();
  const TrainConfig cfg = small_config();
  const ParamStore params = init_params(cfg.model);
  Rng rng(5);
  std::vector<MultimodalBatch> batches;
  batches.push_back(synth_batch(task, rng, 16));
  const AlignmentEval eval = eval_alignment(cfg.model, params, batches);
  CHECK(eval.per_position.size() == static_cast<size_t>(task.text_len));
  CHECK(std::abs(eval.mean) <= 1.0);

  // Instrumented case: text representations forced equal to the summary.
  Graph g;
  BoundParams bound = bind_params(g, params, false);
  ForwardOutput fwd = forward(g, cfg.model, bound, batches[0]);
  ForwardOutput rigged = fwd;
  std::vector<double> tiled;
  const int d = cfg.model.d_model;
  for (int e = 0; e < fwd.batch; ++e) {
    for (int t = 0; t < fwd.m; ++t) {
      const auto s =
          fwd.image_summary.value().subspan(static_cast<size_t>(e) * d, static_cast<size_t>(d));
      tiled.insert(tiled.end(), s.begin(), s.end());
    }
  }
  rigged.text_embeddings = g.constant({fwd.batch * fwd.m, d}, tiled);
  const AlignmentEval perfect = alignment_from_output(rigged, batches[0].loss_mask);
  CHECK(perfect.mean == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : perfect.per_position) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("metrics jsonl round-trip is exact") {
  MetricsTrace trace;
  trace.records.push_back({0, 3.14159265358979, 0.123456789012345, 3.26504944260214, -0.01, 2.5});
  trace.records.push_back({250, 1.0 / 3.0, 0.0, 1.0 / 3.0, 0.987654321, 0.7});
  const std::string path = "test_metrics_tmp.jsonl";
  write_metrics_jsonl(path, trace);
  const MetricsTrace back = read_metrics_jsonl(path);
  REQUIRE(back.records.size() == trace.records.size());
  for (size_t i = 0; i < trace.records.size(); ++i) {
    CHECK(back.records[i].step == trace.records[i].step);
    CHECK(back.records[i].ce == trace.records[i].ce);
    CHECK(back.records[i].vista == trace.records[i].vista);
    CHECK(back.records[i].total == trace.records[i].total);
    CHECK(back.records[i].mean_alignment == trace.records[i].mean_alignment);
    CHECK(back.records[i].holdout_ce == trace.records[i].holdout_ce);
  }
  std::remove(path.c_str());
}

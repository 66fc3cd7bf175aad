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
#include <vector>

#include "doctest.h"
#include "vista/losses.hpp"
#include "vista/rng.hpp"

using namespace vista;

namespace {

// Reference cross-entropy via an explicit per-position log-sum-exp loop.
double ce_reference(const std::vector<double>& logits, const std::vector<int>& targets,
                    const std::vector<uint8_t>& mask, int rows, int v) {
  double total = 0.0;
  int count = 0;
  for (int r = 0; r < rows; ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    double mx = logits[static_cast<size_t>(r) * v];
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits[static_cast<size_t>(r) * v + j]);
    double lse = 0.0;
    for (int j = 0; j < v; ++j) lse += std::exp(logits[static_cast<size_t>(r) * v + j] - mx);
    lse = mx + std::log(lse);
    total += lse - logits[static_cast<size_t>(r) * v + targets[static_cast<size_t>(r)]];
    ++count;
  }
  return total / count;
}

}  // namespace

TEST_CASE("cross_entropy of uniform logits is ln V") {
  Graph g;
  std::vector<double> logits(2 * 4, 0.0);
  std::vector<int> targets = {1, 3};
  std::vector<uint8_t> mask = {1, 1};
  Tensor ce = cross_entropy(g, g.constant({2, 4}, logits), targets, mask);
  CHECK(ce.scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("cross_entropy vanishes as the correct-logit margin grows") {
  Graph g;
  double prev = 1e9;
  for (double margin : {2.0, 8.0, 32.0}) {
    std::vector<double> logits(4, 0.0);
    logits[2] = margin;
    std::vector<int> targets = {2};
    std::vector<uint8_t> mask = {1};
    Tensor ce = cross_entropy(g, g.constant({1, 4}, logits), targets, mask);
    CHECK(ce.scalar() < prev);
    prev = ce.scalar();
  }
  CHECK(prev < 1e-13);
}

TEST_CASE("cross_entropy matches log-sum-exp loop on random logits") {
  Rng rng(41);
  Graph g;
  const int rows = 6, v = 5;
  std::vector<double> logits(static_cast<size_t>(rows) * v);
  for (double& x : logits) x = rng.normal(0.0, 3.0);
  std::vector<int> targets(rows);
  for (int& t : targets) t = static_cast<int>(rng.below(v));
  std::vector<uint8_t> mask = {1, 0, 1, 1, 0, 1};
  Tensor ce = cross_entropy(g, g.constant({rows, v}, logits), targets, mask);
  CHECK(ce.scalar() == doctest::Approx(ce_reference(logits, targets, mask, rows, v)).epsilon(1e-13));
}

TEST_CASE("cross_entropy contract errors") {
  Graph g;
  std::vector<double> logits(4, 0.0);
  std::vector<int> targets = {0};
  std::vector<uint8_t> empty_mask = {0};
  Tensor t = g.constant({1, 4}, logits);
  CHECK_THROWS_AS(cross_entropy(g, t, targets, empty_mask), Error);
  std::vector<int> bad_target = {4};
  std::vector<uint8_t> mask = {1};
  CHECK_THROWS_AS(cross_entropy(g, t, bad_target, mask), Error);
}

TEST_CASE("vista_weight values and bounds") {
  CHECK(vista_weight(4, 4, WeightScheme::normalized()) == 1.0);
  CHECK(vista_weight(1, 4, WeightScheme::normalized()) == 0.25);
  CHECK(vista_weight(3, 7, WeightScheme::linear()) == 3.0);
  CHECK(vista_weight(5, 9, WeightScheme::uniform(0.4)) == 0.4);
  CHECK_THROWS_AS(vista_weight(0, 4, WeightScheme::normalized()), Error);
  CHECK_THROWS_AS(vista_weight(5, 4, WeightScheme::normalized()), Error);
  CHECK_THROWS_AS(WeightScheme::uniform(-0.1), Error);
}

TEST_CASE("linear weights average to (m+1)/2; normalized to (m+1)/(2m)") {
  // m = 7 is the worked case; the acceptance suite sweeps every m in 1..64.
  const auto w = vista_weights(7, WeightScheme::linear());
  double sum = 0.0;
  for (double x : w) sum += x;
  CHECK(sum / 7.0 == 4.0);
  CHECK(vista_weight_mean(7, WeightScheme::linear()) == 4.0);
  CHECK(vista_weight_mean(7, WeightScheme::normalized()) == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("weights are strictly increasing and normalized weights lie in (0,1]") {
  for (int m : {1, 2, 5, 16, 64}) {
    const auto wn = vista_weights(m, WeightScheme::normalized());
    const auto wl = vista_weights(m, WeightScheme::linear());
    for (int t = 0; t < m; ++t) {
      CHECK(wn[static_cast<size_t>(t)] > 0.0);
      CHECK(wn[static_cast<size_t>(t)] <= 1.0);
      if (t > 0) {
        CHECK(wn[static_cast<size_t>(t)] > wn[static_cast<size_t>(t - 1)]);
        CHECK(wl[static_cast<size_t>(t)] > wl[static_cast<size_t>(t - 1)]);
      }
    }
    CHECK(wn[static_cast<size_t>(m - 1)] == 1.0);
  }
}

TEST_CASE("vista_l2_loss hand-computed example") {
  // One example, m = 2, d = 1: x = (1, 3), anchor = 2, normalized weights
  // (1/2, 1): (1/2) * (0.5*1 + 1*1) = 0.75.
  Graph g;
  std::vector<double> x = {1.0, 3.0};
  std::vector<double> s = {2.0};
  std::vector<uint8_t> mask = {1, 1};
  Tensor loss = vista_l2_loss(g, g.constant({2, 1}, x), g.constant({1, 1}, s), mask,
                              WeightScheme::normalized(), 1, 2);
  CHECK(loss.scalar() == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("vista_l2_loss is zero iff representations equal the anchor") {
  Graph g;
  std::vector<double> s = {0.4, -1.2, 2.0};
  std::vector<double> x = {0.4, -1.2, 2.0, 0.4, -1.2, 2.0};
  std::vector<uint8_t> mask = {1, 1};
  Tensor zero = vista_l2_loss(g, g.constant({2, 3}, x), g.constant({1, 3}, s), mask,
                              WeightScheme::normalized(), 1, 2);
  CHECK(zero.scalar() == 0.0);

  std::vector<double> x2 = x;
  x2[4] += 1e-3;
  Tensor nonzero = vista_l2_loss(g, g.constant({2, 3}, x2), g.constant({1, 3}, s), mask,
                                 WeightScheme::normalized(), 1, 2);
  CHECK(nonzero.scalar() > 0.0);
}

TEST_CASE("uniform(1) scheme reduces to the unweighted mean distance") {
  Rng rng(43);
  Graph g;
  const int b = 2, m = 3, d = 4;
  std::vector<double> x(static_cast<size_t>(b) * m * d), s(static_cast<size_t>(b) * d);
  for (double& v : x) v = rng.normal();
  for (double& v : s) v = rng.normal();
  std::vector<uint8_t> mask(static_cast<size_t>(b) * m, 1);
  Tensor loss = vista_l2_loss(g, g.constant({b * m, d}, x), g.constant({b, d}, s), mask,
                              WeightScheme::uniform(1.0), b, m);
  double expect = 0.0;
  for (int e = 0; e < b; ++e) {
    double row = 0.0;
    for (int t = 0; t < m; ++t) {
      for (int j = 0; j < d; ++j) {
        const double diff = x[(static_cast<size_t>(e) * m + t) * d + j] - s[static_cast<size_t>(e) * d + j];
        row += diff * diff;
      }
    }
    expect += row / m;
  }
  expect /= b;
  CHECK(loss.scalar() == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("vista_cosine_loss endpoints and hand example") {
  Graph g;
  std::vector<double> s = {1.0, 2.0};
  std::vector<uint8_t> one = {1};

  std::vector<double> parallel = {2.0, 4.0};
  Tensor aligned = vista_cosine_loss(g, g.constant({1, 2}, parallel), g.constant({1, 2}, s), one,
                                     WeightScheme::normalized(), 1, 1);
  CHECK(aligned.scalar() == doctest::Approx(-1.0).epsilon(1e-12));

  std::vector<double> ortho = {-2.0, 1.0};
  Tensor zero = vista_cosine_loss(g, g.constant({1, 2}, ortho), g.constant({1, 2}, s), one,
                                  WeightScheme::normalized(), 1, 1);
  CHECK(zero.scalar() == doctest::Approx(0.0).epsilon(1e-12));

  // x_t = -anchor for both positions, normalized weights over m = 2:
  // -(1/2)(0.5*(-1) + 1*(-1)) = +0.75.
  std::vector<double> anti = {-1.0, -2.0, -1.0, -2.0};
  std::vector<uint8_t> mask2 = {1, 1};
  Tensor flipped = vista_cosine_loss(g, g.constant({2, 2}, anti), g.constant({1, 2}, s), mask2,
                                     WeightScheme::normalized(), 1, 2);
  CHECK(flipped.scalar() == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("alignment losses honor the supervision mask re-indexing") {
  // Supervised positions 2 and 4 of m = 4 re-index to t_eff = 1, 2 with
  // m_eff = 2, so weights are 1/2 and 1.
  Graph g;
  std::vector<double> x = {5.0, 1.0, 9.0, 3.0};  // d = 1, m = 4
  std::vector<double> s = {2.0};
  std::vector<uint8_t> mask = {0, 1, 0, 1};
  Tensor loss = vista_l2_loss(g, g.constant({4, 1}, x), g.constant({1, 1}, s), mask,
                              WeightScheme::normalized(), 1, 4);
  const double expect = 0.5 * (0.5 * 1.0 + 1.0 * 1.0);
  CHECK(loss.scalar() == doctest::Approx(expect).epsilon(1e-15));

  std::vector<uint8_t> empty = {0, 0, 0, 0};
  Tensor xs = g.constant({4, 1}, x);
  Tensor ss = g.constant({1, 1}, s);
  CHECK_THROWS_AS(vista_l2_loss(g, xs, ss, empty, WeightScheme::normalized(), 1, 4), Error);
}

TEST_CASE("homogeneity: scaling scales L2 by gamma^2 and leaves cosine unchanged") {
  Rng rng(47);
  const int b = 2, m = 3, d = 5;
  std::vector<double> x(static_cast<size_t>(b) * m * d), s(static_cast<size_t>(b) * d);
  for (double& v : x) v = rng.normal();
  for (double& v : s) v = rng.normal();
  std::vector<uint8_t> mask(static_cast<size_t>(b) * m, 1);

  for (double gamma : {0.5, 2.0, 7.0}) {
    Graph g;
    std::vector<double> xs = x, ss = s;
    for (double& v : xs) v *= gamma;
    for (double& v : ss) v *= gamma;
    Tensor base_l2 = vista_l2_loss(g, g.constant({b * m, d}, x), g.constant({b, d}, s), mask,
                                   WeightScheme::normalized(), b, m);
    Tensor scaled_l2 = vista_l2_loss(g, g.constant({b * m, d}, xs), g.constant({b, d}, ss), mask,
                                     WeightScheme::normalized(), b, m);
    CHECK(scaled_l2.scalar() ==
          doctest::Approx(gamma * gamma * base_l2.scalar()).epsilon(1e-12));

    Tensor base_cos = vista_cosine_loss(g, g.constant({b * m, d}, x), g.constant({b, d}, s), mask,
                                        WeightScheme::normalized(), b, m);
    Tensor scaled_cos = vista_cosine_loss(g, g.constant({b * m, d}, xs), g.constant({b, d}, ss),
                                          mask, WeightScheme::normalized(), b, m);
    CHECK(scaled_cos.scalar() == doctest::Approx(base_cos.scalar()).epsilon(1e-12));
  }
}

TEST_CASE("vista loss stays non-negative for the L2 variant") {
  Rng rng(53);
  for (int trial = 0; trial < 25; ++trial) {
    Graph g;
    const int b = 1 + static_cast<int>(rng.below(3));
    const int m = 1 + static_cast<int>(rng.below(5));
    const int d = 1 + static_cast<int>(rng.below(6));
    std::vector<double> x(static_cast<size_t>(b) * m * d), s(static_cast<size_t>(b) * d);
    for (double& v : x) v = rng.normal();
    for (double& v : s) v = rng.normal();
    std::vector<uint8_t> mask(static_cast<size_t>(b) * m, 0);
    int supervised = 0;
    for (auto& bit : mask) {
      bit = rng.below(2) ? 1 : 0;
      supervised += bit;
    }
    if (supervised == 0) mask[0] = 1;
    Tensor loss = vista_l2_loss(g, g.constant({b * m, d}, x), g.constant({b, d}, s), mask,
                                WeightScheme::normalized(), b, m);
    CHECK(loss.scalar() >= 0.0);
  }
}

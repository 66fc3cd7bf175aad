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
#include <limits>
#include <vector>

#include "doctest.h"
#include "vista/rng.hpp"
#include "vista/tensor.hpp"

using namespace vista;

namespace {

std::vector<double> random_values(Rng& rng, size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, scale);
  return v;
}

// Independent triple-loop reference for the matmul oracle.
std::vector<double> matmul_reference(const std::vector<double>& a, const std::vector<double>& b,
                                     int r, int k, int c) {
  std::vector<double> out(static_cast<size_t>(r) * c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      for (int kk = 0; kk < k; ++kk)
        out[i * c + j] += a[i * k + kk] * b[kk * c + j];
  return out;
}

}  // namespace

TEST_CASE("matmul identity and small cases") {
  Graph g;
  std::vector<double> eye = {1, 0, 0, 1};
  std::vector<double> abcd = {2.5, -3, 4, 7.25};
  Tensor i2 = g.constant({2, 2}, eye);
  Tensor m = g.constant({2, 2}, abcd);
  Tensor prod = g.matmul(i2, m);
  for (int i = 0; i < 4; ++i) CHECK(prod.value()[i] == abcd[i]);

  std::vector<double> row = {1, 2}, col = {3, 4};
  Tensor a = g.constant({1, 2}, row);
  Tensor b = g.constant({2, 1}, col);
  CHECK(g.matmul(a, b).scalar() == 11.0);
}

TEST_CASE("matmul matches triple-loop reference") {
  Rng rng(7);
  Graph g;
  auto av = random_values(rng, 12);
  auto bv = random_values(rng, 8);
  Tensor a = g.constant({3, 4}, av);
  Tensor b = g.constant({4, 2}, bv);
  Tensor out = g.matmul(a, b);
  const auto expect = matmul_reference(av, bv, 3, 4, 2);
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(out.value()[i] == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("matmul shape mismatch is a dimension error") {
  Graph g;
  std::vector<double> v(6, 1.0);
  Tensor a = g.constant({2, 3}, v);
  Tensor b = g.constant({2, 3}, v);
  CHECK_THROWS_AS(g.matmul(a, b), Error);
}

TEST_CASE("softmax uniform, stability, and normalization") {
  Graph g;
  std::vector<double> zeros(4, 0.0);
  Tensor s = g.softmax(g.constant({4}, zeros));
  for (int i = 0; i < 4; ++i) CHECK(s.value()[i] == doctest::Approx(0.25).epsilon(1e-15));

  std::vector<double> big = {1000.0, 0.0};
  Tensor t = g.softmax(g.constant({2}, big));
  CHECK(t.value()[0] == doctest::Approx(1.0));
  CHECK(t.value()[1] == doctest::Approx(0.0));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = random_values(rng, 8, 4.0);
    Tensor r = g.softmax(g.constant({2, 4}, v));
    for (int row = 0; row < 2; ++row) {
      double sum = 0.0;
      for (int j = 0; j < 4; ++j) sum += r.value()[row * 4 + j];
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("layer_norm constant row and already-normalized row") {
  Graph g;
  std::vector<double> ones = {1.0, 1.0, 1.0, 1.0};
  std::vector<double> gain = {1.0, 1.0, 1.0, 1.0};
  std::vector<double> bias(4, 0.0);
  Tensor out =
      g.layer_norm(g.constant({4}, ones), g.constant({4}, gain), g.constant({4}, bias), 1e-6);
  for (int i = 0; i < 4; ++i) CHECK(out.value()[i] == 0.0);

  std::vector<double> pm = {1.0, -1.0};
  std::vector<double> gain2 = {1.0, 1.0}, bias2 = {0.0, 0.0};
  Tensor out2 =
      g.layer_norm(g.constant({2}, pm), g.constant({2}, gain2), g.constant({2}, bias2), 1e-12);
  CHECK(out2.value()[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(out2.value()[1] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("layer_norm statistics before affine") {
  Rng rng(11);
  Graph g;
  auto v = random_values(rng, 16, 2.0);
  std::vector<double> gain(16, 1.0), bias(16, 0.0);
  Tensor out =
      g.layer_norm(g.constant({16}, v), g.constant({16}, gain), g.constant({16}, bias), 1e-10);
  double mean = 0.0;
  for (double x : out.value()) mean += x;
  mean /= 16.0;
  double var = 0.0;
  for (double x : out.value()) var += (x - mean) * (x - mean);
  var /= 16.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::abs(var - 1.0) < 1e-6);
}

TEST_CASE("layer_norm rejects non-positive eps") {
  Graph g;
  std::vector<double> v = {1.0, 2.0};
  std::vector<double> gb = {1.0, 1.0};
  Tensor x = g.constant({2}, v);
  Tensor gain = g.constant({2}, gb);
  CHECK_THROWS_AS(g.layer_norm(x, gain, gain, 0.0), Error);
}

TEST_CASE("embedding_gather rows and gradient accumulation") {
  Graph g;
  std::vector<double> table = {1, 2, 3, 4};
  Tensor t = g.leaf({2, 2}, table, true);
  std::vector<int> ids = {0};
  Tensor row = g.embedding_gather(t, ids);
  CHECK(row.value()[0] == 1.0);
  CHECK(row.value()[1] == 2.0);

  std::vector<int> twice = {1, 1};
  Tensor rows = g.embedding_gather(t, twice);
  Tensor loss = g.sum(rows);
  g.backward(loss);
  // Row 1 receives gradient from both gathered copies.
  CHECK(t.grad()[2] == 2.0);
  CHECK(t.grad()[3] == 2.0);
  CHECK(t.grad()[0] == 0.0);

  std::vector<int> bad = {5};
  CHECK_THROWS_AS(g.embedding_gather(t, bad), Error);
}

TEST_CASE("embedding_gather matches row-copy reference") {
  Rng rng(5);
  Graph g;
  auto table = random_values(rng, 6 * 3);
  Tensor t = g.constant({6, 3}, table);
  std::vector<int> ids = {4, 0, 2, 2};
  Tensor out = g.embedding_gather(t, ids);
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(out.value()[i * 3 + j] == table[static_cast<size_t>(ids[i]) * 3 + j]);
}

TEST_CASE("gather backward conserves upstream gradient mass") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g;
    auto table = random_values(rng, 5 * 4);
    Tensor t = g.leaf({5, 4}, table, true);
    std::vector<int> ids(7);
    for (int& id : ids) id = static_cast<int>(rng.below(5));
    Tensor rows = g.embedding_gather(t, ids);
    auto w = random_values(rng, rows.value().size());
    Tensor loss = g.weighted_sum(rows, w);
    g.backward(loss);
    double upstream = 0.0;
    for (double x : w) upstream += x;
    double table_grad = 0.0;
    for (double x : t.grad()) table_grad += x;
    CHECK(table_grad == doctest::Approx(upstream).epsilon(1e-12));
  }
}

TEST_CASE("squared_l2 values and analytic derivative") {
  Graph g;
  std::vector<double> a = {3.0}, b = {2.0};
  Tensor ta = g.leaf({1}, a, true);
  Tensor tb = g.constant({1}, b);
  Tensor d = g.squared_l2(ta, tb);
  CHECK(d.scalar() == 1.0);
  g.backward(d);
  CHECK(ta.grad()[0] == 2.0);

  Tensor same = g.squared_l2(tb, tb);
  CHECK(same.scalar() == 0.0);

  std::vector<double> wrong = {1.0, 2.0};
  Tensor tw = g.constant({2}, wrong);
  CHECK_THROWS_AS(g.squared_l2(ta, tw), Error);
}

TEST_CASE("squared_l2 matches elementwise loop") {
  Rng rng(23);
  Graph g;
  auto a = random_values(rng, 16);
  auto b = random_values(rng, 16);
  Tensor d = g.squared_l2(g.constant({16}, a), g.constant({16}, b));
  double expect = 0.0;
  for (int i = 0; i < 16; ++i) expect += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(d.scalar() == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("cosine_sim endpoints") {
  Graph g;
  std::vector<double> a = {1.0, 2.0, -0.5};
  Tensor ta = g.constant({3}, a);
  CHECK(g.cosine_sim(ta, ta, 1e-12).scalar() == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> x = {1.0, 0.0}, y = {0.0, 3.0};
  CHECK(g.cosine_sim(g.constant({2}, x), g.constant({2}, y), 1e-12).scalar() == 0.0);

  std::vector<double> na(a.size());
  for (size_t i = 0; i < a.size(); ++i) na[i] = -a[i];
  CHECK(g.cosine_sim(ta, g.constant({3}, na), 1e-12).scalar() ==
        doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("backward on sum gives ones; scaling gives the exact constant") {
  Graph g;
  std::vector<double> v = {1.0, -2.0, 0.5};
  Tensor x = g.leaf({3}, v, true);
  Tensor s = g.sum(x);
  g.backward(s);
  for (double gv : x.grad()) CHECK(gv == 1.0);

  for (double c : {-3.0, 0.25, 1e6}) {
    Graph g2;
    Tensor x2 = g2.leaf({3}, v, true);
    Tensor y = g2.sum(g2.scale(x2, c));
    g2.backward(y);
    for (double gv : x2.grad()) CHECK(gv == c);
  }
}

TEST_CASE("backward requires scalar loss; repeated calls accumulate") {
  Graph g;
  std::vector<double> v = {1.0, 2.0};
  Tensor x = g.leaf({2}, v, true);
  Tensor y = g.scale(x, 2.0);
  CHECK_THROWS_AS(g.backward(y), Error);

  Tensor s = g.sum(y);
  g.backward(s);
  CHECK(x.grad()[0] == 2.0);
  g.backward(s);
  CHECK(x.grad()[0] == 4.0);
  g.zero_grad();
  g.backward(s);
  CHECK(x.grad()[0] == 2.0);
}

TEST_CASE("non-finite leaf data is rejected") {
  Graph g;
  std::vector<double> bad = {1.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(g.leaf({2}, bad, false), Error);
}

TEST_CASE("grad_check on quadratic is exact to round-off") {
  Rng rng(29);
  auto c = random_values(rng, 8);
  auto x0 = random_values(rng, 8);
  const double err = grad_check(
      [&](Graph& g, const Tensor& x) { return g.squared_l2(x, g.constant({8}, c)); }, {8}, x0,
      1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check on softmax-then-pick") {
  Rng rng(31);
  auto x0 = random_values(rng, 6);
  std::vector<int> pick_id = {3};
  const double err = grad_check(
      [&](Graph& g, const Tensor& x) {
        Tensor p = g.softmax(g.reshape(x, {1, 6}));
        return g.pick(p, pick_id);
      },
      {6}, x0, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check over every primitive with random inputs") {
  Rng rng(37);
  const double h = 1e-5;
  auto vec = [&](size_t n) { return random_values(rng, n); };

  const auto c12 = vec(12);
  const auto c6 = vec(6);
  const auto c3 = vec(3);
  const auto mat_3x5 = vec(15);
  const auto mat_4x3 = vec(12);
  const auto anchors = vec(6);  // 2 x 3
  const auto w20 = vec(20);
  const auto w12 = vec(12);
  const auto w10 = vec(10);
  const auto w8 = vec(8);
  const auto w6 = vec(6);
  const auto w4 = vec(4);
  const std::vector<int> gather_ids = {2, 0, 3, 3};
  const std::vector<int> pick_ids = {1, 0, 2, 1};
  const std::vector<double> group_w = {0.7, -0.3, 1.1, 0.4};
  std::vector<double> ln_gain(6, 1.0), ln_bias(6, 0.0);
  for (size_t i = 0; i < 6; ++i) ln_gain[i] += 0.1 * c6[i];

  struct Case {
    const char* name;
    Shape shape;
    std::function<Tensor(Graph&, const Tensor&)> fn;
  };
  const std::vector<Case> cases = {
      {"add", {12},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.add(x, g.constant({12}, c12)), w12);
       }},
      {"sub", {12},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.sub(g.constant({12}, c12), x), w12);
       }},
      {"mul", {12},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.mul(x, g.constant({12}, c12)), w12);
       }},
      {"scale_add_scalar", {12},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.add_scalar(g.scale(x, -1.7), 0.3), w12);
       }},
      {"gelu", {12},
       [&](Graph& g, const Tensor& x) { return g.weighted_sum(g.gelu(x), w12); }},
      {"matmul_left", {4, 3},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.matmul(x, g.constant({3, 5}, mat_3x5)), w20);
       }},
      {"matmul_right", {3, 5},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.matmul(g.constant({4, 3}, mat_4x3), x), w20);
       }},
      {"transpose", {4, 3},
       [&](Graph& g, const Tensor& x) { return g.weighted_sum(g.transpose(x), w12); }},
      {"reshape", {12},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.softmax(g.reshape(x, {3, 4})), w12);
       }},
      {"concat_rows", {2, 3},
       [&](Graph& g, const Tensor& x) {
         const Tensor parts[] = {x, g.constant({2, 3}, c6)};
         return g.weighted_sum(g.concat_rows(parts), w12);
       }},
      {"concat_cols", {2, 3},
       [&](Graph& g, const Tensor& x) {
         const Tensor parts[] = {x, g.constant({2, 2}, w4)};
         return g.weighted_sum(g.concat_cols(parts), w10);
       }},
      {"slice_rows", {4, 3},
       [&](Graph& g, const Tensor& x) { return g.weighted_sum(g.slice_rows(x, 1, 3), w6); }},
      {"slice_cols", {4, 3},
       [&](Graph& g, const Tensor& x) { return g.weighted_sum(g.slice_cols(x, 0, 2), w8); }},
      {"add_rows_x", {4, 3},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.add_rows(x, g.constant({3}, c3)), w12);
       }},
      {"add_rows_v", {3},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.add_rows(g.constant({4, 3}, mat_4x3), x), w12);
       }},
      {"softmax", {2, 6},
       [&](Graph& g, const Tensor& x) { return g.weighted_sum(g.softmax(x), w12); }},
      {"log_softmax", {2, 6},
       [&](Graph& g, const Tensor& x) { return g.weighted_sum(g.log_softmax(x), w12); }},
      {"layer_norm_x", {2, 6},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(
             g.layer_norm(x, g.constant({6}, ln_gain), g.constant({6}, ln_bias), 1e-5), w12);
       }},
      {"layer_norm_gain", {6},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(
             g.layer_norm(g.constant({2, 6}, c12), x, g.constant({6}, ln_bias), 1e-5), w12);
       }},
      {"layer_norm_bias", {6},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(
             g.layer_norm(g.constant({2, 6}, c12), g.constant({6}, ln_gain), x, 1e-5), w12);
       }},
      {"embedding_gather", {5, 3},
       [&](Graph& g, const Tensor& x) {
         return g.weighted_sum(g.embedding_gather(x, gather_ids), w12);
       }},
      {"pick", {4, 3},
       [&](Graph& g, const Tensor& x) { return g.weighted_sum(g.pick(x, pick_ids), w4); }},
      {"sum", {12}, [&](Graph& g, const Tensor& x) { return g.sum(x); }},
      {"squared_l2_a", {6},
       [&](Graph& g, const Tensor& x) { return g.squared_l2(x, g.constant({6}, c6)); }},
      {"squared_l2_b", {6},
       [&](Graph& g, const Tensor& x) { return g.squared_l2(g.constant({6}, c6), x); }},
      {"cosine_sim_a", {6},
       [&](Graph& g, const Tensor& x) { return g.cosine_sim(x, g.constant({6}, c6), 1e-12); }},
      {"cosine_sim_b", {6},
       [&](Graph& g, const Tensor& x) { return g.cosine_sim(g.constant({6}, c6), x, 1e-12); }},
      {"group_weighted_sqdist_x", {4, 3},
       [&](Graph& g, const Tensor& x) {
         return g.group_weighted_sqdist(x, g.constant({2, 3}, anchors), group_w, 2);
       }},
      {"group_weighted_sqdist_anchor", {2, 3},
       [&](Graph& g, const Tensor& x) {
         return g.group_weighted_sqdist(g.constant({4, 3}, mat_4x3), x, group_w, 2);
       }},
      {"group_weighted_cosine_x", {4, 3},
       [&](Graph& g, const Tensor& x) {
         return g.group_weighted_cosine(x, g.constant({2, 3}, anchors), group_w, 2, 1e-12);
       }},
      {"group_weighted_cosine_anchor", {2, 3},
       [&](Graph& g, const Tensor& x) {
         return g.group_weighted_cosine(g.constant({4, 3}, mat_4x3), x, group_w, 2, 1e-12);
       }},
  };

  // Fused attention, checked against each of its three inputs. The additive
  // mask mimics a one-image-token causal layout over seq = 3.
  const std::vector<double> attn_mask = {0, -1e9, -1e9, 0, 0, -1e9, 0, 0, 0};
  const auto attn_aux1 = vec(2 * 3 * 4);
  const auto attn_aux2 = vec(2 * 3 * 4);
  const auto w24 = vec(2 * 3 * 4);
  for (int which = 0; which < 3; ++which) {
    const char* names[] = {"attention_q", "attention_k", "attention_v"};
    const auto fn = [&, which](Graph& g, const Tensor& x) {
      Tensor a = g.constant({6, 4}, attn_aux1);
      Tensor b = g.constant({6, 4}, attn_aux2);
      Tensor mask = g.constant({3, 3}, attn_mask);
      Tensor q = which == 0 ? x : a;
      Tensor k = which == 1 ? x : (which == 0 ? a : b);
      Tensor v = which == 2 ? x : b;
      return g.weighted_sum(g.multihead_attention(q, k, v, mask, 2, 2), w24);
    };
    const auto x0 = random_values(rng, 24);
    const double err = grad_check(fn, {6, 4}, x0, h);
    CHECK_MESSAGE(err < 1e-6, names[which] << " max_rel_err=" << err);
  }

  for (const auto& c : cases) {
    CAPTURE(c.name);
    const auto x0 = random_values(rng, static_cast<size_t>(shape_numel(c.shape)));
    const double err = grad_check(c.fn, c.shape, x0, h);
    CHECK_MESSAGE(err < 1e-6, c.name << " max_rel_err=" << err);
  }
}

TEST_CASE("fused attention matches the composition of primitives") {
  Rng rng(59);
  const int batch = 2, seq = 4, heads = 2, d = 6, hd = d / heads;
  const auto qv = random_values(rng, static_cast<size_t>(batch) * seq * d);
  const auto kv = random_values(rng, static_cast<size_t>(batch) * seq * d);
  const auto vv = random_values(rng, static_cast<size_t>(batch) * seq * d);
  std::vector<double> mask(static_cast<size_t>(seq) * seq, 0.0);
  for (int i = 0; i < seq; ++i)
    for (int j = i + 1; j < seq; ++j) mask[static_cast<size_t>(i) * seq + j] = -1e9;

  Graph g;
  Tensor q = g.constant({batch * seq, d}, qv);
  Tensor k = g.constant({batch * seq, d}, kv);
  Tensor v = g.constant({batch * seq, d}, vv);
  Tensor m = g.constant({seq, seq}, mask);
  Tensor fused = g.multihead_attention(q, k, v, m, batch, heads);

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> rows;
  for (int e = 0; e < batch; ++e) {
    Tensor qe = g.slice_rows(q, static_cast<int64_t>(e) * seq, static_cast<int64_t>(e + 1) * seq);
    Tensor ke = g.slice_rows(k, static_cast<int64_t>(e) * seq, static_cast<int64_t>(e + 1) * seq);
    Tensor ve = g.slice_rows(v, static_cast<int64_t>(e) * seq, static_cast<int64_t>(e + 1) * seq);
    std::vector<Tensor> ctx;
    for (int h = 0; h < heads; ++h) {
      Tensor qh = g.slice_cols(qe, h * hd, (h + 1) * hd);
      Tensor kh = g.slice_cols(ke, h * hd, (h + 1) * hd);
      Tensor vh = g.slice_cols(ve, h * hd, (h + 1) * hd);
      Tensor probs = g.softmax(g.add(g.scale(g.matmul(qh, g.transpose(kh)), scale), m));
      ctx.push_back(g.matmul(probs, vh));
    }
    rows.push_back(g.concat_cols(ctx));
  }
  Tensor composed = g.concat_rows(rows);
  REQUIRE(fused.value().size() == composed.value().size());
  for (size_t i = 0; i < fused.value().size(); ++i) {
    CHECK(fused.value()[i] == doctest::Approx(composed.value()[i]).epsilon(1e-13));
  }
}

TEST_CASE("grad_check rejects out-of-range step and nondeterministic functions") {
  std::vector<double> x0 = {1.0, 2.0};
  auto fn = [](Graph& g, const Tensor& x) { return g.sum(x); };
  CHECK_THROWS_AS(grad_check(fn, {2}, x0, 1e-8), Error);
  CHECK_THROWS_AS(grad_check(fn, {2}, x0, 1e-2), Error);

  int calls = 0;
  auto noisy = [&calls](Graph& g, const Tensor& x) {
    return g.add_scalar(g.sum(x), 0.001 * static_cast<double>(calls++));
  };
  CHECK_THROWS_AS(grad_check(noisy, {2}, x0, 1e-5), Error);
}

TEST_CASE("corrupted backward seed is detectable") {
  std::vector<double> x0 = {0.3, -0.8, 1.4};
  Graph g;
  Tensor x = g.leaf({3}, x0, true);
  Tensor y = g.squared_l2(x, g.zeros({3}));
  g.debug_seed_perturbation = 1e-2;
  g.backward(y);
  // Gradient should be 2*x; the perturbed seed scales it by 1.01.
  CHECK(x.grad()[0] == doctest::Approx(2.0 * 0.3 * 1.01).epsilon(1e-12));
}

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

#include "vista/infotheory.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "vista/version.hpp"

namespace vista {

namespace {

constexpr double kDegenerateDeltaH = 1e-9;
constexpr double kRatioDenomFloor = 1e-12;
constexpr double kPremiseFloor = 1e-3;  // nats of per-step conditional text MI

double plogp_sum(std::span<const double> p) {
  double s = 0.0;
  for (double x : p) {
    if (x > 0.0) s += x * std::log(x);
  }
  return s;
}

// Entropy of the full-mass distribution p (mass 1).
double raw_entropy(std::span<const double> p) { return -plogp_sum(p); }

// Entropy of p / mass for an unnormalized conditional slice.
double cond_entropy(std::span<const double> p, double mass) {
  if (mass <= 0.0) return 0.0;
  return std::log(mass) - plogp_sum(p) / mass;
}

void check_distribution_row(std::span<const double> row, const std::string& what) {
  double sum = 0.0;
  for (double x : row) {
    require(x >= 0.0, ErrorKind::kInvalid, what + ": negative probability");
    sum += x;
  }
  require(std::abs(sum - 1.0) <= 1e-12, ErrorKind::kInvalid,
          what + ": probabilities sum to " + std::to_string(sum) + ", not 1");
}

int64_t checked_table_size(int latent, int vocab, int len) {
  int64_t size = latent;
  for (int i = 0; i < len; ++i) {
    size *= vocab;
    require(size <= kEnumerationBudget, ErrorKind::kBudget,
            "enumeration budget exceeded: |Z|*|V|^t > 10^7 at t = " + std::to_string(i + 1));
  }
  return size;
}

// Everything the curve operations need from one pass over prefix lengths.
struct Sweep {
  std::vector<double> h_full;   // H(x_1..t)
  std::vector<double> h_step;   // H(x_t | x_<t), direct
  std::vector<double> h_xt;     // H(x_t)
  std::vector<double> i_vis;    // I(x_t; z)
  std::vector<double> i_cond;   // I(x_t; x_<t | z)
  std::vector<double> i_total;  // I(x_t; z, x_<t)
  double chain_rule_max_err = 0.0;
  double mi_chain_max_err = 0.0;
};

Sweep run_sweep(const DiscreteSequenceModel& model, int T) {
  model.validate();
  require(T >= 1, ErrorKind::kInvalid, "horizon must be >= 1");
  checked_table_size(model.latent_size, model.vocab_size, T);

  const int z_count = model.latent_size;
  const int v = model.vocab_size;

  Sweep sweep;
  JointTable prev;
  prev.latent = z_count;
  prev.vocab = v;
  prev.len = 0;
  prev.p = model.prior;

  std::vector<double> q_prev = {1.0};  // text marginal of the empty prefix
  double h_joint_prev = raw_entropy(prev.p);
  double step_sum = 0.0;

  for (int t = 1; t <= T; ++t) {
    JointTable cur = extend_joint(model, prev);
    const int64_t seqs = static_cast<int64_t>(cur.p.size()) / z_count;

    std::vector<double> q(seqs, 0.0);
    for (int z = 0; z < z_count; ++z) {
      const double* slice = cur.p.data() + static_cast<size_t>(z) * seqs;
      for (int64_t s = 0; s < seqs; ++s) q[static_cast<size_t>(s)] += slice[s];
    }

    const double h_full = raw_entropy(q);

    double h_step = 0.0;
    for (int64_t s = 0; s < seqs; ++s) {
      const double ps = q[static_cast<size_t>(s)];
      if (ps > 0.0) h_step -= ps * (std::log(ps) - std::log(q_prev[static_cast<size_t>(s / v)]));
    }
    step_sum += h_step;
    sweep.chain_rule_max_err = std::max(sweep.chain_rule_max_err, std::abs(step_sum - h_full));

    // Pair marginal (z, x_t) and the x_t marginal.
    std::vector<double> pair(static_cast<size_t>(z_count) * v, 0.0);
    std::vector<double> z_marg(static_cast<size_t>(z_count), 0.0);
    for (int z = 0; z < z_count; ++z) {
      const double* slice = cur.p.data() + static_cast<size_t>(z) * seqs;
      for (int64_t s = 0; s < seqs; ++s) {
        pair[static_cast<size_t>(z) * v + (s % v)] += slice[s];
        z_marg[static_cast<size_t>(z)] += slice[s];
      }
    }
    std::vector<double> x_marg(static_cast<size_t>(v), 0.0);
    for (int z = 0; z < z_count; ++z)
      for (int x = 0; x < v; ++x) x_marg[static_cast<size_t>(x)] += pair[static_cast<size_t>(z) * v + x];

    const double h_xt = raw_entropy(x_marg);
    const double i_vis = raw_entropy(z_marg) + h_xt - raw_entropy(pair);

    // I(x_t; x_<t | z) = sum_z p(z) * I_z(x_t; x_<t).
    double i_cond = 0.0;
    const int64_t prev_seqs = seqs / v;
    for (int z = 0; z < z_count; ++z) {
      const double mass = z_marg[static_cast<size_t>(z)];
      if (mass <= 0.0) continue;
      std::span<const double> slice(cur.p.data() + static_cast<size_t>(z) * seqs,
                                    static_cast<size_t>(seqs));
      std::span<const double> prev_slice(prev.p.data() + static_cast<size_t>(z) * prev_seqs,
                                         static_cast<size_t>(prev_seqs));
      std::vector<double> xz(static_cast<size_t>(v), 0.0);
      for (int64_t s = 0; s < seqs; ++s) xz[static_cast<size_t>(s % v)] += slice[s];
      const double i_z =
          cond_entropy(prev_slice, mass) + cond_entropy(xz, mass) - cond_entropy(slice, mass);
      i_cond += mass * i_z;
    }

    const double h_joint = raw_entropy(cur.p);
    const double i_total = h_xt + h_joint_prev - h_joint;
    sweep.mi_chain_max_err =
        std::max(sweep.mi_chain_max_err, std::abs(i_total - (i_vis + i_cond)));

    sweep.h_full.push_back(h_full);
    sweep.h_step.push_back(h_step);
    sweep.h_xt.push_back(h_xt);
    sweep.i_vis.push_back(i_vis);
    sweep.i_cond.push_back(i_cond);
    sweep.i_total.push_back(i_total);

    prev = std::move(cur);
    q_prev = std::move(q);
    h_joint_prev = h_joint;
  }
  return sweep;
}

}  // namespace

void DiscreteSequenceModel::validate() const {
  require(latent_size >= 1, ErrorKind::kInvalid, "latent_size must be >= 1");
  require(vocab_size >= 2, ErrorKind::kInvalid, "vocab_size must be >= 2");
  require(horizon >= 1, ErrorKind::kInvalid, "horizon must be >= 1");
  require(prior.size() == static_cast<size_t>(latent_size), ErrorKind::kInvalid,
          "prior extent mismatch");
  require(initial.size() == static_cast<size_t>(latent_size) * vocab_size, ErrorKind::kInvalid,
          "initial extent mismatch");
  require(transition.size() == static_cast<size_t>(latent_size) * vocab_size * vocab_size,
          ErrorKind::kInvalid, "transition extent mismatch");
  check_distribution_row(prior, "prior");
  for (int z = 0; z < latent_size; ++z) {
    check_distribution_row(
        std::span<const double>(initial.data() + static_cast<size_t>(z) * vocab_size,
                                static_cast<size_t>(vocab_size)),
        "initial[" + std::to_string(z) + "]");
    for (int x = 0; x < vocab_size; ++x) {
      check_distribution_row(
          std::span<const double>(
              transition.data() + (static_cast<size_t>(z) * vocab_size + x) * vocab_size,
              static_cast<size_t>(vocab_size)),
          "transition[" + std::to_string(z) + "][" + std::to_string(x) + "]");
    }
  }
}

double JointTable::total() const {
  double s = 0.0;
  for (double x : p) s += x;
  return s;
}

JointTable extend_joint(const DiscreteSequenceModel& model, const JointTable& table) {
  const int z_count = model.latent_size;
  const int v = model.vocab_size;
  const int64_t old_seqs = static_cast<int64_t>(table.p.size()) / z_count;
  checked_table_size(z_count, v, table.len + 1);

  JointTable out;
  out.latent = z_count;
  out.vocab = v;
  out.len = table.len + 1;
  out.p.assign(table.p.size() * static_cast<size_t>(v), 0.0);
  for (int z = 0; z < z_count; ++z) {
    const double* src = table.p.data() + static_cast<size_t>(z) * old_seqs;
    double* dst = out.p.data() + static_cast<size_t>(z) * old_seqs * v;
    for (int64_t s = 0; s < old_seqs; ++s) {
      const double mass = src[s];
      const double* row = table.len == 0
                              ? model.initial.data() + static_cast<size_t>(z) * v
                              : model.transition.data() +
                                    (static_cast<size_t>(z) * v + static_cast<size_t>(s % v)) * v;
      double* cell = dst + static_cast<size_t>(s) * v;
      for (int x = 0; x < v; ++x) cell[x] = mass * row[x];
    }
  }
  return out;
}

JointTable enumerate_joint(const DiscreteSequenceModel& model, int len) {
  model.validate();
  require(len >= 1, ErrorKind::kInvalid, "enumerate_joint: length must be >= 1");
  checked_table_size(model.latent_size, model.vocab_size, len);
  JointTable table;
  table.latent = model.latent_size;
  table.vocab = model.vocab_size;
  table.len = 0;
  table.p = model.prior;
  for (int t = 0; t < len; ++t) table = extend_joint(model, table);
  return table;
}

double entropy(std::span<const double> dist) {
  double sum = 0.0;
  for (double x : dist) {
    require(x >= 0.0, ErrorKind::kInvalid, "entropy: negative probability");
    sum += x;
  }
  require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::kInvalid,
          "entropy: distribution sums to " + std::to_string(sum) + ", not 1");
  return raw_entropy(dist);
}

double mutual_information(std::span<const double> joint, int rows, int cols) {
  require(rows >= 1 && cols >= 1 &&
              joint.size() == static_cast<size_t>(rows) * static_cast<size_t>(cols),
          ErrorKind::kInvalid, "mutual_information: extent mismatch");
  double sum = 0.0;
  for (double x : joint) {
    require(x >= 0.0, ErrorKind::kInvalid, "mutual_information: negative probability");
    sum += x;
  }
  require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::kInvalid,
          "mutual_information: joint sums to " + std::to_string(sum) + ", not 1");
  std::vector<double> a(static_cast<size_t>(rows), 0.0);
  std::vector<double> b(static_cast<size_t>(cols), 0.0);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double x = joint[static_cast<size_t>(i) * cols + j];
      a[static_cast<size_t>(i)] += x;
      b[static_cast<size_t>(j)] += x;
    }
  }
  return raw_entropy(a) + raw_entropy(b) - raw_entropy(joint);
}

PrefixEntropyCurve prefix_entropy_curve(const DiscreteSequenceModel& model, int T) {
  const Sweep sweep = run_sweep(model, T);
  PrefixEntropyCurve curve;
  curve.h_step = sweep.h_step;
  curve.h_prefix.resize(static_cast<size_t>(T));
  for (int t = 1; t <= T; ++t) {
    curve.h_prefix[static_cast<size_t>(t - 1)] = t == 1 ? 0.0 : sweep.h_full[static_cast<size_t>(t - 2)];
  }
  curve.h_full = sweep.h_full.back();
  curve.delta_h = *std::min_element(curve.h_step.begin(), curve.h_step.end());
  curve.degenerate = curve.delta_h <= kDegenerateDeltaH;
  curve.chain_rule_max_err = sweep.chain_rule_max_err;
  return curve;
}

std::vector<double> visual_mi_curve(const DiscreteSequenceModel& model, int T) {
  return run_sweep(model, T).i_vis;
}

AlignmentRatioCurve alignment_ratio_curve(const DiscreteSequenceModel& model, int T) {
  const Sweep sweep = run_sweep(model, T);
  AlignmentRatioCurve curve;
  curve.i_vis = sweep.i_vis;
  curve.i_cond = sweep.i_cond;
  curve.i_total = sweep.i_total;
  curve.mi_chain_max_err = sweep.mi_chain_max_err;
  curve.ratio.resize(static_cast<size_t>(T));
  curve.flagged.assign(static_cast<size_t>(T), 0);
  for (int t = 0; t < T; ++t) {
    const double denom = curve.i_vis[static_cast<size_t>(t)] + curve.i_cond[static_cast<size_t>(t)];
    double r;
    if (denom > kRatioDenomFloor) {
      r = curve.i_vis[static_cast<size_t>(t)] / denom;
    } else {
      curve.flagged[static_cast<size_t>(t)] = 1;
      r = curve.i_vis[static_cast<size_t>(t)] > kRatioDenomFloor ? 1.0 : 0.0;
    }
    curve.ratio[static_cast<size_t>(t)] = std::clamp(r, 0.0, 1.0);
  }
  // Theorem's premise: conditional text MI stays bounded below past t = 1.
  for (int t = 2; t <= T; ++t) {
    if (curve.i_cond[static_cast<size_t>(t - 1)] < kPremiseFloor) {
      curve.premise_holds = false;
      break;
    }
  }
  return curve;
}

double rho_vista(double i_vis, double i_cond, double lambda) {
  require(i_vis >= 0.0 && i_cond >= 0.0, ErrorKind::kInvalid,
          "rho_vista: mutual information terms must be non-negative");
  require(lambda >= 0.0, ErrorKind::kInvalid, "rho_vista: lambda must be >= 0");
  require(i_vis > 0.0 || i_cond > 0.0, ErrorKind::kInvalid,
          "rho_vista: undefined when both information terms are zero");
  const double boosted = (1.0 + lambda) * i_vis;
  return boosted / (boosted + i_cond);
}

RhoBound rho_lower_bound_check(double i_vis, double i_cond, double f_t) {
  require(f_t > 0.0, ErrorKind::kInvalid, "rho_lower_bound_check: f_t must be positive");
  require(i_vis > 0.0, ErrorKind::kInvalid, "rho_lower_bound_check: i_vis must be positive");
  require(i_cond >= 0.0, ErrorKind::kInvalid, "rho_lower_bound_check: i_cond must be >= 0");
  RhoBound result;
  result.rho = rho_vista(i_vis, i_cond, f_t);
  result.bound = 1.0 / (1.0 + i_cond / (f_t * i_vis));
  result.holds = result.rho + 1e-12 >= result.bound;
  return result;
}

double lambda_from_rho(double rho_target, double i_vis, double i_cond) {
  require(rho_target > 0.0 && rho_target < 1.0, ErrorKind::kInvalid,
          "lambda_from_rho: target must lie in (0, 1)");
  require(i_vis > 0.0, ErrorKind::kInvalid, "lambda_from_rho: i_vis must be positive");
  require(i_cond >= 0.0, ErrorKind::kInvalid, "lambda_from_rho: i_cond must be >= 0");
  return i_cond / ((1.0 / rho_target - 1.0) * i_vis) - 1.0;
}

InfoCurve info_curve(const DiscreteSequenceModel& model, int T, double epsilon) {
  InfoCurve curve;
  curve.horizon = T;
  curve.vocab_log = std::log(static_cast<double>(model.vocab_size));
  curve.epsilon = epsilon;
  curve.prefix = prefix_entropy_curve(model, T);
  curve.align = alignment_ratio_curve(model, T);
  curve.rho.resize(static_cast<size_t>(T));
  curve.envelope.resize(static_cast<size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const double i_vis = curve.align.i_vis[static_cast<size_t>(t - 1)];
    const double i_cond = curve.align.i_cond[static_cast<size_t>(t - 1)];
    const double lambda = static_cast<double>(t) / static_cast<double>(T);
    const double boosted = (1.0 + lambda) * i_vis;
    curve.rho[static_cast<size_t>(t - 1)] =
        (boosted + i_cond) > 0.0 ? boosted / (boosted + i_cond) : 0.0;
    const double denom = t * curve.prefix.delta_h - epsilon - curve.vocab_log;
    curve.envelope[static_cast<size_t>(t - 1)] =
        denom > 0.0 ? curve.vocab_log / denom : std::numeric_limits<double>::infinity();
  }
  return curve;
}

DiagnoseSummary diagnose(const DiscreteSequenceModel& model, int T, double epsilon) {
  DiagnoseSummary summary;
  summary.curve = info_curve(model, T, epsilon);
  const InfoCurve& c = summary.curve;
  summary.delta_h = c.prefix.delta_h;
  summary.degenerate = c.prefix.degenerate;
  summary.premise_holds = c.align.premise_holds;

  summary.lemma1_pass = c.prefix.h_full >= T * c.prefix.delta_h - 1e-9;
  for (int t = 1; t <= T; ++t) {
    if (c.prefix.h_prefix[static_cast<size_t>(t - 1)] < (t - 1) * c.prefix.delta_h - 1e-9) {
      summary.lemma1_pass = false;
    }
  }

  summary.lemma2_pass = true;
  for (double iv : c.align.i_vis) {
    if (iv < -1e-12 || iv > c.vocab_log + 1e-9) summary.lemma2_pass = false;
  }

  summary.chain_rule_pass =
      c.prefix.chain_rule_max_err <= 1e-10 && c.align.mi_chain_max_err <= 1e-10;

  summary.rho_bound_pass = true;
  for (int t = 1; t <= T; ++t) {
    const double i_vis = c.align.i_vis[static_cast<size_t>(t - 1)];
    if (i_vis <= 1e-12) continue;
    const double f_t = static_cast<double>(t) / static_cast<double>(T);
    const RhoBound rb = rho_lower_bound_check(i_vis, c.align.i_cond[static_cast<size_t>(t - 1)], f_t);
    if (!rb.holds) summary.rho_bound_pass = false;
  }
  return summary;
}

bool DiscreteSequenceModel::is_builtin(std::string_view name) {
  return name == "iid-uniform" || name == "strong-memory" || name == "copy-channel";
}

DiscreteSequenceModel DiscreteSequenceModel::builtin(std::string_view name) {
  DiscreteSequenceModel m;
  if (name == "iid-uniform") {
    m.latent_size = 1;
    m.vocab_size = 4;
    m.horizon = 8;
    m.prior = {1.0};
    m.initial.assign(4, 0.25);
    m.transition.assign(16, 0.25);
    return m;
  }
  if (name == "copy-channel") {
    m.latent_size = 2;
    m.vocab_size = 2;
    m.horizon = 6;
    m.prior = {0.5, 0.5};
    m.initial = {1.0, 0.0, 0.0, 1.0};
    m.transition.assign(8, 0.5);
    return m;
  }
  if (name == "strong-memory") {
    // Latent picks the starting region; transitions hold strong history
    // dependence but are latent-independent, so I(x_t; z) washes out while
    // I(x_t; x_<t | z) persists.
    m.latent_size = 2;
    m.vocab_size = 4;
    m.horizon = 8;
    m.prior = {0.5, 0.5};
    m.initial = {0.85, 0.05, 0.05, 0.05,
                 0.05, 0.05, 0.05, 0.85};
    m.transition.resize(2 * 4 * 4);
    for (int z = 0; z < 2; ++z) {
      for (int s = 0; s < 4; ++s) {
        double* row = m.transition.data() + (static_cast<size_t>(z) * 4 + s) * 4;
        for (int x = 0; x < 4; ++x) row[x] = 0.075;
        row[s] = 0.55;
        row[(s + 1) % 4] = 0.30;
      }
    }
    return m;
  }
  fail(ErrorKind::kParse, "unknown builtin model: " + std::string(name));
}

namespace {

struct ModelParser {
  std::string origin;
  int line_no = 0;

  [[noreturn]] void err(const std::string& message) const {
    fail(ErrorKind::kParse, origin + ":" + std::to_string(line_no) + ": " + message);
  }
};

}  // namespace

DiscreteSequenceModel DiscreteSequenceModel::parse_text(const std::string& text,
                                                        const std::string& origin) {
  ModelParser ctx{origin, 0};
  DiscreteSequenceModel m;
  m.latent_size = 0;
  m.vocab_size = 0;
  m.horizon = 0;

  std::vector<uint8_t> have_initial, have_transition;
  bool have_prior = false;

  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++ctx.line_no;
    std::string line = raw;
    if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;

    std::vector<std::string> heads{key};
    std::string tok;
    while (ls >> tok && tok != "=") heads.push_back(tok);
    if (tok != "=") ctx.err("expected '=' after key '" + key + "'");

    std::vector<double> values;
    double x;
    while (ls >> x) values.push_back(x);
    if (!ls.eof()) ctx.err("malformed number in value list");

    auto want_scalar_int = [&](const char* what) {
      if (heads.size() != 1 || values.size() != 1 || values[0] != std::floor(values[0]) ||
          values[0] < 1) {
        ctx.err(std::string(what) + " must be a single positive integer");
      }
      return static_cast<int>(values[0]);
    };
    auto need_dims = [&] {
      if (m.latent_size == 0 || m.vocab_size == 0)
        ctx.err("latent and vocab must be declared before probability rows");
    };
    auto parse_index = [&](const std::string& s, int limit, const char* what) {
      for (char ch : s)
        if (!std::isdigit(static_cast<unsigned char>(ch))) ctx.err(std::string(what) + " index must be an integer");
      const int idx = std::stoi(s);
      if (idx < 0 || idx >= limit) ctx.err(std::string(what) + " index " + s + " out of range");
      return idx;
    };
    auto normalized_row = [&](const char* what) {
      if (values.size() != static_cast<size_t>(m.vocab_size))
        ctx.err(std::string(what) + " row must have vocab entries");
      double sum = 0.0;
      for (double p : values) {
        if (p < 0.0) ctx.err(std::string(what) + " row has a negative probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) ctx.err(std::string(what) + " row sums to " + std::to_string(sum));
      for (double& p : values) p /= sum;
      return values;
    };

    if (key == "latent") {
      m.latent_size = want_scalar_int("latent");
    } else if (key == "vocab") {
      m.vocab_size = want_scalar_int("vocab");
      if (m.vocab_size < 2) ctx.err("vocab must be >= 2");
    } else if (key == "horizon") {
      m.horizon = want_scalar_int("horizon");
    } else if (key == "prior") {
      need_dims();
      if (heads.size() != 1) ctx.err("prior takes no indices");
      if (values.size() != static_cast<size_t>(m.latent_size)) ctx.err("prior must have latent entries");
      double sum = 0.0;
      for (double p : values) {
        if (p < 0.0) ctx.err("prior has a negative probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) ctx.err("prior sums to " + std::to_string(sum));
      for (double& p : values) p /= sum;
      m.prior = values;
      have_prior = true;
    } else if (key == "initial") {
      need_dims();
      if (heads.size() != 2) ctx.err("initial requires one latent index");
      const int z = parse_index(heads[1], m.latent_size, "latent");
      if (m.initial.empty()) {
        m.initial.assign(static_cast<size_t>(m.latent_size) * m.vocab_size, 0.0);
        have_initial.assign(static_cast<size_t>(m.latent_size), 0);
      }
      if (have_initial[static_cast<size_t>(z)]) ctx.err("duplicate initial row");
      const auto row = normalized_row("initial");
      std::copy(row.begin(), row.end(), m.initial.begin() + static_cast<size_t>(z) * m.vocab_size);
      have_initial[static_cast<size_t>(z)] = 1;
    } else if (key == "transition") {
      need_dims();
      if (heads.size() != 3) ctx.err("transition requires latent and previous-token indices");
      const int z = parse_index(heads[1], m.latent_size, "latent");
      const int s = parse_index(heads[2], m.vocab_size, "token");
      if (m.transition.empty()) {
        m.transition.assign(static_cast<size_t>(m.latent_size) * m.vocab_size * m.vocab_size, 0.0);
        have_transition.assign(static_cast<size_t>(m.latent_size) * m.vocab_size, 0);
      }
      const size_t row_idx = static_cast<size_t>(z) * m.vocab_size + s;
      if (have_transition[row_idx]) ctx.err("duplicate transition row");
      const auto row = normalized_row("transition");
      std::copy(row.begin(), row.end(), m.transition.begin() + row_idx * m.vocab_size);
      have_transition[row_idx] = 1;
    } else {
      ctx.err("unknown key '" + key + "'");
    }
  }

  ctx.line_no = 0;
  if (m.latent_size == 0 || m.vocab_size == 0) ctx.err("missing latent or vocab declaration");
  if (m.horizon == 0) m.horizon = 8;
  if (!have_prior) ctx.err("missing prior");
  for (size_t z = 0; z < have_initial.size(); ++z)
    if (!have_initial[z]) ctx.err("missing initial row for latent " + std::to_string(z));
  if (m.initial.empty()) ctx.err("missing initial rows");
  if (m.transition.empty()) ctx.err("missing transition rows");
  for (size_t r = 0; r < have_transition.size(); ++r) {
    if (!have_transition[r])
      ctx.err("missing transition row for latent " + std::to_string(r / m.vocab_size) +
              ", token " + std::to_string(r % m.vocab_size));
  }
  m.validate();
  return m;
}

DiscreteSequenceModel DiscreteSequenceModel::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kParse, "cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

void write_info_csv(const std::string& path, const InfoCurve& curve,
                    const std::string& model_label, uint64_t config_hash) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  require(f != nullptr, ErrorKind::kIo, "cannot open for writing: " + path);
  std::fprintf(f, "# vista diagnose curve\n");
  std::fprintf(f, "# version = %s\n", kVersionString);
  std::fprintf(f, "# config_hash = %s\n", hash_hex(config_hash).c_str());
  std::fprintf(f, "# model = %s\n", model_label.c_str());
  std::fprintf(f, "# horizon = %d\n", curve.horizon);
  std::fprintf(f, "# epsilon = %.17g\n", curve.epsilon);
  std::fprintf(f, "# delta_h = %.17g\n", curve.prefix.delta_h);
  std::fprintf(f, "# C = %.17g\n", curve.vocab_log);
  std::fprintf(f, "t,H_prefix,H_step,I_vis,I_cond,ratio,rho,bound\n");
  for (int t = 1; t <= curve.horizon; ++t) {
    const size_t i = static_cast<size_t>(t - 1);
    std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t,
                 curve.prefix.h_prefix[i], curve.prefix.h_step[i], curve.align.i_vis[i],
                 curve.align.i_cond[i], curve.align.ratio[i], curve.rho[i], curve.envelope[i]);
  }
  std::fclose(f);
}

}  // namespace vista

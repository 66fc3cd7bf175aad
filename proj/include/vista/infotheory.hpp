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

#ifndef VISTA_INFOTHEORY_HPP_
#define VISTA_INFOTHEORY_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vista/error.hpp"

namespace vista {

// Latent-conditioned order-1 Markov sequence generator. Small enough that the
// exact joint distribution over (z, x_1..t) is enumerable, which makes every
// entropy / mutual-information quantity computable without estimators.
struct DiscreteSequenceModel {
  int latent_size = 1;
  int vocab_size = 2;
  int horizon = 1;
  std::vector<double> prior;       // latent_size
  std::vector<double> initial;     // latent_size x vocab (row per latent)
  std::vector<double> transition;  // latent_size x vocab x vocab

  void validate() const;

  // Line-oriented key/value text, parse errors carry "<origin>:<line>".
  static DiscreteSequenceModel parse_file(const std::string& path);
  static DiscreteSequenceModel parse_text(const std::string& text, const std::string& origin);

  static bool is_builtin(std::string_view name);
  static DiscreteSequenceModel builtin(std::string_view name);  // iid-uniform,
                                                                // strong-memory,
                                                                // copy-channel
};

// Exact joint probabilities over (z, x_1..len), sequence index row-major.
struct JointTable {
  int latent = 0;
  int vocab = 0;
  int len = 0;
  std::vector<double> p;

  double total() const;
};

inline constexpr int64_t kEnumerationBudget = 10'000'000;

JointTable enumerate_joint(const DiscreteSequenceModel& model, int len);
JointTable extend_joint(const DiscreteSequenceModel& model, const JointTable& table);

// -sum p ln p in nats with 0 ln 0 = 0; input must be a distribution.
double entropy(std::span<const double> dist);
// H(A) + H(B) - H(A,B) for a rows x cols joint.
double mutual_information(std::span<const double> joint, int rows, int cols);

struct PrefixEntropyCurve {
  std::vector<double> h_prefix;  // H(x_<t) for t = 1..T (strict prefix, first entry 0)
  std::vector<double> h_step;    // H(x_t | x_<t), computed directly (not by subtraction)
  double h_full = 0.0;           // H(x_1..T)
  double delta_h = 0.0;          // min_t h_step[t]
  bool degenerate = false;       // delta_h ~ 0, the non-degeneracy premise fails
  double chain_rule_max_err = 0.0;
};
PrefixEntropyCurve prefix_entropy_curve(const DiscreteSequenceModel& model, int T);

// I(x_t; z) per t = 1..T.
std::vector<double> visual_mi_curve(const DiscreteSequenceModel& model, int T);

struct AlignmentRatioCurve {
  std::vector<double> i_vis;      // I(x_t; z)
  std::vector<double> i_cond;     // I(x_t; x_<t | z)
  std::vector<double> i_total;    // I(x_t; z, x_<t)
  std::vector<double> ratio;      // i_vis / (i_vis + i_cond), in [0, 1]
  std::vector<uint8_t> flagged;   // denominator ~ 0 at t
  double mi_chain_max_err = 0.0;  // max_t |i_total - (i_vis + i_cond)|
  bool premise_holds = true;      // per-step conditional text MI stays bounded below
};
AlignmentRatioCurve alignment_ratio_curve(const DiscreteSequenceModel& model, int T);

// Visual share of total mutual information after boosting the visual term by
// (1 + lambda).
double rho_vista(double i_vis, double i_cond, double lambda);

struct RhoBound {
  double rho = 0.0;
  double bound = 0.0;
  bool holds = false;
};
// Checks rho(lambda = f_t) >= 1 / (1 + i_cond / (f_t * i_vis)).
RhoBound rho_lower_bound_check(double i_vis, double i_cond, double f_t);

// Inverse of rho_vista in lambda; a negative result means no boost is needed.
double lambda_from_rho(double rho_target, double i_vis, double i_cond);

struct InfoCurve {
  int horizon = 0;
  double vocab_log = 0.0;  // C = ln |V|
  double epsilon = 0.0;
  PrefixEntropyCurve prefix;
  AlignmentRatioCurve align;
  std::vector<double> rho;       // rho_vista at lambda = t / T
  std::vector<double> envelope;  // C / (t*delta_h - epsilon - C), +inf until positive
};
InfoCurve info_curve(const DiscreteSequenceModel& model, int T, double epsilon);

struct DiagnoseSummary {
  InfoCurve curve;
  bool lemma1_pass = false;      // H(x_<t) >= (t-1)*delta_h - 1e-9
  bool lemma2_pass = false;      // 0 - 1e-12 <= I(x_t; z) <= C + 1e-9
  bool chain_rule_pass = false;  // entropy and MI chain identities within 1e-10
  bool rho_bound_pass = false;   // rho(lambda = t/T) >= its lower bound
  bool degenerate = false;
  bool premise_holds = true;
  double delta_h = 0.0;
};
DiagnoseSummary diagnose(const DiscreteSequenceModel& model, int T, double epsilon);

void write_info_csv(const std::string& path, const InfoCurve& curve,
                    const std::string& model_label, uint64_t config_hash);

}  // namespace vista

#endif  // VISTA_INFOTHEORY_HPP_

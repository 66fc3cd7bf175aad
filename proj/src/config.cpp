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

#include "vista/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vista/version.hpp"

namespace vista {

namespace {

struct RawTask {
  int latent_size = 6;
  int text_len = 16;
  double feature_noise = 0.05;
  uint64_t seed = 1234;
};

struct ParseCtx {
  std::string origin;
  int line_no = 0;

  [[noreturn]] void err(const std::string& message) const {
    fail(ErrorKind::kParse, origin + ":" + std::to_string(line_no) + ": " + message);
  }

  int to_int(const std::string& s) const {
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (errno != 0 || end == s.c_str() || *end != '\0') err("expected an integer, got '" + s + "'");
    return static_cast<int>(v);
  }
  uint64_t to_u64(const std::string& s) const {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (errno != 0 || end == s.c_str() || *end != '\0' || s.find('-') != std::string::npos)
      err("expected an unsigned integer, got '" + s + "'");
    return v;
  }
  double to_double(const std::string& s) const {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (errno != 0 || end == s.c_str() || *end != '\0') err("expected a number, got '" + s + "'");
    return v;
  }
};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_text(const std::string& text, const std::string& origin) {
  ParseCtx ctx{origin, 0};
  ModelConfig model;
  RawTask task;
  TrainConfig train;
  LossOptions loss;
  std::string uniform_c_line;  // remembers where uniform_c was set, for checks
  bool have_uniform_c = false;
  double uniform_c = 0.0;

  std::set<std::string> seen;
  std::string section;

  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++ctx.line_no;
    std::string line = raw;
    if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') ctx.err("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "task" && section != "train" && section != "loss")
        ctx.err("unknown section [" + section + "]");
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) ctx.err("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) ctx.err("expected 'key = value'");
    if (section.empty()) ctx.err("key '" + key + "' outside any section");
    const std::string qualified = section + "." + key;
    if (!seen.insert(qualified).second) ctx.err("duplicate key '" + qualified + "'");

    if (section == "model") {
      if (key == "vocab_size") model.vocab_size = ctx.to_int(value);
      else if (key == "d_model") model.d_model = ctx.to_int(value);
      else if (key == "n_layers") model.n_layers = ctx.to_int(value);
      else if (key == "n_heads") model.n_heads = ctx.to_int(value);
      else if (key == "n_image_tokens") model.n_image_tokens = ctx.to_int(value);
      else if (key == "max_text_len") model.max_text_len = ctx.to_int(value);
      else if (key == "d_image_feat") model.d_image_feat = ctx.to_int(value);
      else if (key == "seed") model.seed = ctx.to_u64(value);
      else ctx.err("unknown key '" + qualified + "'");
    } else if (section == "task") {
      if (key == "latent_size") task.latent_size = ctx.to_int(value);
      else if (key == "text_len") task.text_len = ctx.to_int(value);
      else if (key == "feature_noise") task.feature_noise = ctx.to_double(value);
      else if (key == "seed") task.seed = ctx.to_u64(value);
      else ctx.err("unknown key '" + qualified + "'");
    } else if (section == "train") {
      if (key == "steps") train.steps = ctx.to_int(value);
      else if (key == "batch_size") train.batch_size = ctx.to_int(value);
      else if (key == "learning_rate") train.learning_rate = ctx.to_double(value);
      else if (key == "momentum") train.momentum = ctx.to_double(value);
      else if (key == "eval_interval") train.eval_interval = ctx.to_int(value);
      else if (key == "seed") train.seed = ctx.to_u64(value);
      else ctx.err("unknown key '" + qualified + "'");
    } else {  // loss
      if (key == "variant") {
        if (value == "l2") loss.variant = VistaVariant::kL2;
        else if (value == "cosine") loss.variant = VistaVariant::kCosine;
        else if (value == "none") loss.variant = VistaVariant::kNone;
        else ctx.err("variant must be l2, cosine or none");
      } else if (key == "scheme") {
        if (value == "normalized") loss.scheme = WeightScheme::normalized();
        else if (value == "linear") loss.scheme = WeightScheme::linear();
        else if (value == "uniform") loss.scheme = WeightScheme{WeightScheme::Kind::kUniform, 0.0};
        else ctx.err("scheme must be normalized, linear or uniform");
      } else if (key == "uniform_c") {
        uniform_c = ctx.to_double(value);
        have_uniform_c = true;
        uniform_c_line = std::to_string(ctx.line_no);
        if (uniform_c < 0.0) ctx.err("uniform_c must be >= 0");
      } else if (key == "vista_scale") {
        loss.vista_scale = ctx.to_double(value);
      } else if (key == "text_repr") {
        if (value == "embedding") loss.text_repr = TextRepr::kEmbedding;
        else if (value == "hidden") loss.text_repr = TextRepr::kHidden;
        else ctx.err("text_repr must be embedding or hidden");
      } else {
        ctx.err("unknown key '" + qualified + "'");
      }
    }
  }

  if (have_uniform_c) {
    require(loss.scheme.kind == WeightScheme::Kind::kUniform, ErrorKind::kParse,
            origin + ":" + uniform_c_line + ": uniform_c requires scheme = uniform");
    loss.scheme.c = uniform_c;
  }

  ExperimentConfig cfg;
  try {
    cfg.task = TaskSpec::make(task.latent_size, model.vocab_size, task.text_len,
                              model.n_image_tokens, model.d_image_feat, task.feature_noise,
                              task.seed);
    cfg.train = train;
    cfg.train.model = model;
    cfg.train.loss = loss;
    cfg.train.validate();
    require(cfg.task.text_len <= model.max_text_len, ErrorKind::kInvalid,
            "task text_len exceeds model max_text_len");
  } catch (const Error& e) {
    fail(ErrorKind::kParse, origin + ": invalid configuration: " + e.what());
  }
  cfg.content_hash = fnv1a64(text);
  cfg.source = origin;
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kParse, "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

void write_run_manifest(const std::string& path, const ExperimentConfig& config) {
  nlohmann::ordered_json j;
  j["version"] = kVersionString;
  j["config_hash"] = hash_hex(config.content_hash);
  j["config_source"] = config.source;
  j["seeds"] = {{"model", config.train.model.seed},
                {"task", config.task.seed},
                {"train", config.train.seed}};
  j["outputs"] = {{"metrics", "metrics.jsonl"}, {"checkpoint", "final.ckpt"}};
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::kIo, "cannot open for writing: " + path);
  f << j.dump(2) << '\n';
  require(f.good(), ErrorKind::kIo, "write failed: " + path);
}

}  // namespace vista

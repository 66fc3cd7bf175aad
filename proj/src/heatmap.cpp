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

#include "vista/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vista/version.hpp"

namespace vista {

namespace {

double cosine_scalar(std::span<const double> a, std::span<const double> b, double eps) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps));
}

void write_csv_header(std::FILE* f, const HeatmapMeta& meta, const char* kind) {
  std::fprintf(f, "# vista heatmap %s\n", kind);
  std::fprintf(f, "# version = %s\n", kVersionString);
  std::fprintf(f, "# config_hash = %s\n", hash_hex(meta.config_hash).c_str());
  std::fprintf(f, "# checkpoint = %s\n", meta.checkpoint.c_str());
  std::fprintf(f, "# seed = %llu\n", static_cast<unsigned long long>(meta.seed));
}

}  // namespace

HeatmapData compute_heatmap(const ModelConfig& config, const ParamStore& params,
                            const MultimodalBatch& single_example, TextRepr text_repr) {
  require(single_example.batch == 1, ErrorKind::kInvalid,
          "compute_heatmap: expects a single example");
  Graph g;
  BoundParams bound = bind_params(g, params, false);
  const ForwardOutput fwd = forward(g, config, bound, single_example);

  const Tensor& repr = text_repr == TextRepr::kEmbedding ? fwd.text_embeddings : fwd.text_hidden;
  const int d = shape_cols(repr.shape());
  const std::span<const double> xs = repr.value();
  const std::span<const double> img = fwd.image_hidden.value();

  HeatmapData data;
  data.m = fwd.m;
  data.n = fwd.n;
  data.sim.resize(static_cast<size_t>(fwd.m) * fwd.n);
  data.mean.assign(static_cast<size_t>(fwd.n), 0.0);
  for (int t = 0; t < fwd.m; ++t) {
    for (int j = 0; j < fwd.n; ++j) {
      const double sim = cosine_scalar(xs.subspan(static_cast<size_t>(t) * d, static_cast<size_t>(d)),
                                       img.subspan(static_cast<size_t>(j) * d, static_cast<size_t>(d)),
                                       1e-12);
      data.sim[static_cast<size_t>(t) * fwd.n + j] = sim;
      data.mean[static_cast<size_t>(j)] += sim;
    }
  }
  for (double& v : data.mean) v /= static_cast<double>(fwd.m);
  return data;
}

uint8_t similarity_to_byte(double sim) {
  const double clamped = std::clamp(sim, -1.0, 1.0);
  const double mapped = std::floor(255.0 * (clamped + 1.0) / 2.0 + 0.5);
  return static_cast<uint8_t>(std::clamp(mapped, 0.0, 255.0));
}

void write_heatmap_files(const std::string& prefix, const HeatmapData& data,
                         const HeatmapMeta& meta) {
  {
    const std::string path = prefix + ".csv";
    std::FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, ErrorKind::kIo, "cannot open for writing: " + path);
    write_csv_header(f, meta, "matrix");
    std::fprintf(f, "# rows = text positions (%d), cols = image positions (%d)\n", data.m, data.n);
    for (int t = 0; t < data.m; ++t) {
      for (int j = 0; j < data.n; ++j) {
        std::fprintf(f, "%s%.17g", j ? "," : "", data.sim[static_cast<size_t>(t) * data.n + j]);
      }
      std::fputc('\n', f);
    }
    std::fclose(f);
  }
  {
    const std::string path = prefix + ".mean.csv";
    std::FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, ErrorKind::kIo, "cannot open for writing: " + path);
    write_csv_header(f, meta, "mean over text positions");
    for (int j = 0; j < data.n; ++j) std::fprintf(f, "%.17g\n", data.mean[static_cast<size_t>(j)]);
    std::fclose(f);
  }
  {
    const std::string path = prefix + ".pgm";
    std::FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, ErrorKind::kIo, "cannot open for writing: " + path);
    std::fprintf(f, "P5\n%d %d\n255\n", data.n, data.m);
    for (double sim : data.sim) std::fputc(similarity_to_byte(sim), f);
    std::fclose(f);
  }
}

}  // namespace vista

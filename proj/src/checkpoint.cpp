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

#include "vista/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace vista {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'T', 'A'};

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

struct Reader {
  const std::string& data;
  size_t pos = 0;

  void need(size_t n) const {
    require(pos + n <= data.size(), ErrorKind::kParse, "checkpoint truncated");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint8_t>(data[pos]) | (static_cast<uint16_t>(static_cast<uint8_t>(data[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

void append_block(std::string& out, const std::string& name, std::span<const double> values) {
  require(name.size() <= 0xffff, ErrorKind::kInvalid, "checkpoint block name too long");
  put_u16(out, static_cast<uint16_t>(name.size()));
  out.append(name);
  put_u64(out, values.size());
  for (double v : values) put_f64(out, v);
}

}  // namespace

const NamedBlock* Checkpoint::find_extra(std::string_view name) const {
  for (const auto& b : extras) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamStore& params, const std::vector<NamedBlock>& extras) {
  config.validate();
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(config.vocab_size));
  put_u32(out, static_cast<uint32_t>(config.d_model));
  put_u32(out, static_cast<uint32_t>(config.n_layers));
  put_u32(out, static_cast<uint32_t>(config.n_heads));
  put_u32(out, static_cast<uint32_t>(config.n_image_tokens));
  put_u32(out, static_cast<uint32_t>(config.max_text_len));
  put_u32(out, static_cast<uint32_t>(config.d_image_feat));
  put_u64(out, config.seed);
  put_u32(out, static_cast<uint32_t>(params.all().size() + extras.size()));
  for (const auto& p : params.all()) append_block(out, p.name, p.value);
  for (const auto& e : extras) append_block(out, e.name, e.values);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::kIo, "cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), ErrorKind::kIo, "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::kIo, "cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{data};
  require(r.bytes(4) == std::string(kMagic, 4), ErrorKind::kParse,
          "not a checkpoint file (bad magic): " + path);
  const uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorKind::kParse,
          "unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.config.vocab_size = static_cast<int>(r.u32());
  ckpt.config.d_model = static_cast<int>(r.u32());
  ckpt.config.n_layers = static_cast<int>(r.u32());
  ckpt.config.n_heads = static_cast<int>(r.u32());
  ckpt.config.n_image_tokens = static_cast<int>(r.u32());
  ckpt.config.max_text_len = static_cast<int>(r.u32());
  ckpt.config.d_image_feat = static_cast<int>(r.u32());
  ckpt.config.seed = r.u64();
  try {
    ckpt.config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kMismatch, std::string("checkpoint header invalid: ") + e.what());
  }

  const uint32_t block_count = r.u32();
  std::vector<NamedBlock> blocks;
  blocks.reserve(block_count);
  for (uint32_t i = 0; i < block_count; ++i) {
    NamedBlock b;
    const uint16_t name_len = r.u16();
    b.name = r.bytes(name_len);
    const uint64_t count = r.u64();
    require(count <= (1ull << 32), ErrorKind::kParse, "checkpoint block too large");
    b.values.resize(count);
    for (uint64_t j = 0; j < count; ++j) b.values[j] = r.f64();
    blocks.push_back(std::move(b));
  }
  require(r.pos == data.size(), ErrorKind::kParse, "checkpoint has trailing bytes");

  // Model parameters must match the layout implied by the header config.
  ParamStore expected = init_params(ckpt.config);
  size_t bi = 0;
  for (auto& p : expected.all()) {
    require(bi < blocks.size(), ErrorKind::kMismatch,
            "checkpoint missing parameter block: " + p.name);
    require(blocks[bi].name == p.name, ErrorKind::kMismatch,
            "checkpoint block '" + blocks[bi].name + "' does not match expected parameter '" +
                p.name + "'");
    require(blocks[bi].values.size() == p.value.size(), ErrorKind::kMismatch,
            "checkpoint block '" + p.name + "' has wrong element count");
    p.value = std::move(blocks[bi].values);
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
    std::fill(p.momentum.begin(), p.momentum.end(), 0.0);
    ++bi;
  }
  ckpt.params = std::move(expected);
  for (; bi < blocks.size(); ++bi) ckpt.extras.push_back(std::move(blocks[bi]));
  return ckpt;
}

}  // namespace vista

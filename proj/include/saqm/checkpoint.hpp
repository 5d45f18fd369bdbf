// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: magic "SAQM", format version, C, N, then a sequence
// of named f32 tensors (u16 name length, name, u8 rank, u32 dims, payload).
// All integers and floats are little-endian. Save -> load -> save must be
// byte-identical.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "saqm/error.hpp"
#include "saqm/model.hpp"

namespace saqm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline bool get_bytes(std::istream& is, char* out, std::size_t n) {
  is.read(out, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

inline std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  if (!get_bytes(is, reinterpret_cast<char*>(b), 2)) throw ParseError("checkpoint: truncated");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!get_bytes(is, reinterpret_cast<char*>(b), 4)) throw ParseError("checkpoint: truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// Parameter skeleton with the right shapes but zero values, used as the
// assignment target when loading.
inline SaqmParams<float> build_skeleton(std::size_t c) {
  if (c == 0 || c % 8 != 0)
    throw ParseError("checkpoint: stored C = " + std::to_string(c) + " not divisible by 8");
  SaqmParams<float> p;
  p.channels = c;
  p.locations = 64;
  BranchNet<float>* nets[3] = {&p.q_net, &p.k_net, &p.v_net};
  const std::size_t outs[3] = {c / 8, c / 8, c};
  for (int b = 0; b < 3; ++b) {
    nets[b]->out_channels = outs[b];
    for (const auto& [in_ch, out_ch] : branch_plan(c, outs[b])) {
      ConvLayer<float> layer;
      layer.kernel = nets[b]->layers.size() == 7 ? 1 : 3;
      const std::size_t k = layer.kernel;
      layer.weight = Tensor<float>::zeros({out_ch, in_ch, k, k}, true);
      layer.bias = Tensor<float>::zeros({out_ch}, true);
      nets[b]->layers.push_back(std::move(layer));
    }
  }
  p.gamma = Tensor<float>::scalar(0.f, true);
  p.reg_fc0 = {Tensor<float>::zeros({64, c}, true), Tensor<float>::zeros({64}, true)};
  p.reg_fc1 = {Tensor<float>::zeros({1, 64}, true), Tensor<float>::zeros({1}, true)};
  p.dom_fc0 = {Tensor<float>::zeros({64, c}, true), Tensor<float>::zeros({64}, true)};
  p.dom_fc1 = {Tensor<float>::zeros({1, 64}, true), Tensor<float>::zeros({1}, true)};
  return p;
}

}  // namespace detail

inline void save_checkpoint(SaqmParams<float>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  os.write("SAQM", 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(model.channels));
  detail::put_u32(os, static_cast<std::uint32_t>(model.locations));
  for (auto& [name, tensor] : model.named_parameters()) {
    detail::put_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(tensor.rank()));
    for (std::size_t d : tensor.shape()) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (float v : tensor.values()) detail::put_f32(os, v);
  }
  if (!os) throw IoError("checkpoint: write to '" + path + "' failed");
}

inline SaqmParams<float> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!detail::get_bytes(is, magic, 4)) throw ParseError("checkpoint: truncated");
  if (std::memcmp(magic, "SAQM", 4) != 0) throw ParseError("checkpoint: bad magic");
  const std::uint32_t version = detail::get_u32(is);
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
  const std::uint32_t c = detail::get_u32(is);
  const std::uint32_t n = detail::get_u32(is);
  if (n != 64) throw ParseError("checkpoint: unsupported location count " + std::to_string(n));

  auto model = detail::build_skeleton(c);
  std::map<std::string, Tensor<float>> by_name;
  for (auto& [name, tensor] : model.named_parameters()) by_name.emplace(name, tensor);

  std::map<std::string, bool> seen;
  while (true) {
    const int peek = is.peek();
    if (peek == std::char_traits<char>::eof()) break;
    const std::uint16_t name_len = detail::get_u16(is);
    std::string name(name_len, '\0');
    if (!detail::get_bytes(is, name.data(), name_len)) throw ParseError("checkpoint: truncated");
    unsigned char rank_byte;
    if (!detail::get_bytes(is, reinterpret_cast<char*>(&rank_byte), 1))
      throw ParseError("checkpoint: truncated");
    if (rank_byte > 8) throw ParseError("checkpoint: implausible tensor rank");
    std::vector<std::size_t> dims(rank_byte);
    std::size_t numel = 1;
    for (auto& d : dims) {
      d = detail::get_u32(is);
      numel *= d;
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError("checkpoint: unknown tensor '" + name + "'");
    if (seen.count(name)) throw ParseError("checkpoint: duplicate tensor '" + name + "'");
    if (it->second.shape() != dims)
      throw ParseError("checkpoint: shape mismatch for tensor '" + name + "'");
    auto& values = it->second.values();
    for (std::size_t i = 0; i < numel; ++i)
      values[i] = std::bit_cast<float>(detail::get_u32(is));
    seen[name] = true;
  }
  if (seen.size() != by_name.size())
    throw ParseError("checkpoint: missing tensors (" + std::to_string(seen.size()) + " of " +
                     std::to_string(by_name.size()) + " present)");
  return model;
}

}  // namespace saqm

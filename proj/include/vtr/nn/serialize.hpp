// Copyright 2026 The deepmpc-vtr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Weight files:
//
//   "VTRWGHT1"          8-byte magic
//   u32 version         currently 1
//   u64 fingerprint     FNV-1a of the architecture description
//   u32 len, bytes      architecture description (informational)
//   u64 blocks          number of tensors that follow
//   per block: u64 count, count * f32
//
// All integers little-endian. Parameters first, then buffers, in the order
// the model enumerates them.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vtr/nn/layers.hpp"

namespace vtr::nn {

inline constexpr char kWeightsMagic[8] = {'V', 'T', 'R', 'W', 'G', 'H', 'T', '1'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace io {

template <typename I>
void put(std::ostream& os, I v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(I));
}
template <typename I>
I get(std::istream& is, const std::filesystem::path& path) {
  I v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(I))) {
    raise<IoError>(path.string(), ": truncated weights file");
  }
  return v;
}

}  // namespace io

template <typename T>
void save_weights(const std::filesystem::path& path, const std::string& arch,
                  const std::vector<Param<T>*>& params,
                  const std::vector<std::vector<T>*>& buffers) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise<IoError>("cannot write ", path.string());
  os.write(kWeightsMagic, sizeof(kWeightsMagic));
  io::put<std::uint32_t>(os, kWeightsVersion);
  io::put<std::uint64_t>(os, fnv1a(arch));
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(arch.size()));
  os.write(arch.data(), static_cast<std::streamsize>(arch.size()));
  io::put<std::uint64_t>(os, params.size() + buffers.size());
  const auto write_block = [&](const auto& v) {
    io::put<std::uint64_t>(os, v.size());
    for (T x : v) io::put<float>(os, static_cast<float>(x));
  };
  for (const auto* p : params) write_block(p->value);
  for (const auto* b : buffers) write_block(*b);
  if (!os) raise<IoError>("write failed for ", path.string());
}

template <typename T>
void load_weights(const std::filesystem::path& path, const std::string& arch,
                  const std::vector<Param<T>*>& params,
                  const std::vector<std::vector<T>*>& buffers) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise<IoError>("cannot open weights ", path.string());
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kWeightsMagic)) {
    raise<IoError>(path.string(), ": not a weights file");
  }
  const auto version = io::get<std::uint32_t>(is, path);
  if (version != kWeightsVersion) {
    raise<IoError>(path.string(), ": unsupported weights version ", version);
  }
  const auto fp = io::get<std::uint64_t>(is, path);
  const auto len = io::get<std::uint32_t>(is, path);
  std::string stored(len, '\0');
  is.read(stored.data(), len);
  if (fp != fnv1a(arch)) {
    raise<IoError>(path.string(), ": architecture fingerprint mismatch (file '",
                   stored, "', expected '", arch, "')");
  }
  const auto blocks = io::get<std::uint64_t>(is, path);
  if (blocks != params.size() + buffers.size()) {
    raise<IoError>(path.string(), ": block count mismatch");
  }
  const auto read_block = [&](auto& v) {
    const auto n = io::get<std::uint64_t>(is, path);
    if (n != v.size()) raise<IoError>(path.string(), ": tensor size mismatch");
    for (T& x : v) x = static_cast<T>(io::get<float>(is, path));
  };
  for (auto* p : params) read_block(p->value);
  for (auto* b : buffers) read_block(*b);
}

/// Hash of all parameter values and buffers; used to verify frozen models.
template <typename T>
std::uint64_t weights_hash(const std::vector<Param<T>*>& params,
                           const std::vector<std::vector<T>*>& buffers) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : params) {
    h = fnv1a(p->value.data(), p->value.size() * sizeof(T), h);
  }
  for (const auto* b : buffers) h = fnv1a(b->data(), b->size() * sizeof(T), h);
  return h;
}

}  // namespace vtr::nn

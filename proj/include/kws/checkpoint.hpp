// Copyright 2026 The kws-toolkit Authors
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

#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "kws/common.hpp"
#include "kws/model.hpp"

namespace kws {

// Checkpoint format: magic "KWSC", u32 version, a UTF-8 config record
// (u32 byte length + bytes), then the parameter tensors in registry
// order: u32 count, and per tensor a u32-length-prefixed name, u32 rank,
// rank u32 dims, and the float32 payload. All integers little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, Model<float>& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(cat("checkpoint: cannot write '", path, "'"));
  os.write("KWSC", 4);
  io::write_u32(os, kCheckpointVersion);
  const std::string record = model.cfg.to_record();
  io::write_u32(os, static_cast<std::uint32_t>(record.size()));
  os.write(record.data(), static_cast<std::streamsize>(record.size()));
  auto tensors = model.named_tensors();
  io::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (auto& [name, t] : tensors) {
    io::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_u32(os, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d = 0; d < t->rank(); ++d)
      io::write_u32(os, static_cast<std::uint32_t>(t->dim(d)));
    io::write_f32_array(os, t->data(), t->numel());
  }
  if (!os) throw Error(cat("checkpoint: failed writing '", path, "'"));
}

inline Model<float> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(cat("checkpoint: cannot open '", path, "'"));
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "KWSC")
    throw Error(cat("checkpoint: '", path, "' is not a checkpoint (bad magic)"));
  const std::uint32_t version = io::read_u32(is);
  if (version != kCheckpointVersion)
    throw Error(cat("checkpoint: '", path, "' has unsupported version ", version));
  const std::uint32_t record_len = io::read_u32(is);
  std::string record(record_len, '\0');
  is.read(record.data(), record_len);
  if (!is) throw Error(cat("checkpoint: '", path, "' config record truncated"));
  const ModelConfig cfg = ModelConfig::from_record(record);
  Rng unused(0);
  Model<float> model = build_model<float>(cfg, unused, /*zero_init=*/true);
  auto tensors = model.named_tensors();
  const std::uint32_t count = io::read_u32(is);
  if (count != tensors.size())
    throw Error(cat("checkpoint: '", path, "' holds ", count, " tensors, expected ",
                    tensors.size()));
  for (auto& [name, t] : tensors) {
    const std::uint32_t name_len = io::read_u32(is);
    std::string stored(name_len, '\0');
    is.read(stored.data(), name_len);
    if (!is || stored != name)
      throw Error(cat("checkpoint: '", path, "' tensor '", stored, "' does not match expected '",
                      name, "'"));
    const std::uint32_t rank = io::read_u32(is);
    if (rank != t->rank())
      throw Error(cat("checkpoint: tensor '", name, "' rank mismatch"));
    for (std::size_t d = 0; d < t->rank(); ++d) {
      const std::uint32_t dim = io::read_u32(is);
      if (dim != t->dim(d))
        throw Error(cat("checkpoint: tensor '", name, "' dimension ", d, " is ", dim,
                        ", expected ", t->dim(d)));
    }
    io::read_f32_array(is, t->data(), t->numel());
    if (!is) throw Error(cat("checkpoint: tensor '", name, "' payload truncated"));
    require_finite(*t, cat("checkpoint tensor ", name).c_str());
  }
  return model;
}

}  // namespace kws

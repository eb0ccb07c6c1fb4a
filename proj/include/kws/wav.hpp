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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "kws/common.hpp"

namespace kws {

/// Mono audio, samples normalized to [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

namespace detail {

inline std::uint16_t read_u16_le(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw Error("wav: truncated file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw Error("wav: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

/// Reads a PCM WAV file (8-bit unsigned, 16-bit signed, or 32-bit IEEE
/// float; plain or WAVE_FORMAT_EXTENSIBLE). Multi-channel input is
/// averaged down to mono. Compressed codecs are rejected.
inline AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(cat("wav: cannot open '", path, "'"));

  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "RIFF") throw Error(cat("wav: '", path, "' is not a RIFF file"));
  detail::read_u32_le(is);  // riff chunk size
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "WAVE") throw Error(cat("wav: '", path, "' is not a WAVE file"));

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<char> payload;

  while (is.read(magic, 4)) {
    const std::uint32_t size = detail::read_u32_le(is);
    const std::string id(magic, 4);
    if (id == "fmt ") {
      format = detail::read_u16_le(is);
      channels = detail::read_u16_le(is);
      rate = detail::read_u32_le(is);
      detail::read_u32_le(is);  // byte rate
      detail::read_u16_le(is);  // block align
      bits = detail::read_u16_le(is);
      std::uint32_t consumed = 16;
      if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: real format leads the GUID
        const std::uint16_t ext = detail::read_u16_le(is);
        consumed += 2;
        if (ext >= 8) {
          detail::read_u16_le(is);  // valid bits
          detail::read_u32_le(is);  // channel mask
          format = detail::read_u16_le(is);
          consumed += 8;
          is.ignore(ext - 8);
          consumed += ext - 8;
        }
      }
      if (size > consumed) is.ignore(size - consumed);
      have_fmt = true;
    } else if (id == "data") {
      payload.resize(size);
      is.read(payload.data(), size);
      if (!is) throw Error(cat("wav: '", path, "' data chunk truncated"));
    } else {
      is.ignore(size);
    }
    if (size % 2 == 1) is.ignore(1);  // chunks are word aligned
  }

  if (!have_fmt) throw Error(cat("wav: '", path, "' has no fmt chunk"));
  if (format != 1 && format != 3)
    throw Error(cat("wav: '", path, "' uses compressed/unsupported codec (format tag ", format, ")"));
  if (channels == 0 || rate == 0) throw Error(cat("wav: '", path, "' has invalid fmt fields"));
  if (format == 1 && bits != 8 && bits != 16)
    throw Error(cat("wav: '", path, "' unsupported PCM depth ", bits, " bits"));
  if (format == 3 && bits != 32)
    throw Error(cat("wav: '", path, "' unsupported float depth ", bits, " bits"));

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t total = payload.size() / (bytes_per_sample * channels);
  if (total == 0) throw Error(cat("wav: '", path, "' contains no audio"));

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(total);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < total; ++i) {
    float acc = 0.0f;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const std::size_t off = (i * channels + c) * bytes_per_sample;
      float v;
      if (format == 3) {
        std::uint32_t u = static_cast<std::uint32_t>(p[off]) | (static_cast<std::uint32_t>(p[off + 1]) << 8) |
                          (static_cast<std::uint32_t>(p[off + 2]) << 16) |
                          (static_cast<std::uint32_t>(p[off + 3]) << 24);
        std::memcpy(&v, &u, 4);
        if (!std::isfinite(v)) throw Error(cat("wav: '", path, "' contains non-finite samples"));
      } else if (bits == 16) {
        const std::int16_t s = static_cast<std::int16_t>(p[off] | (p[off + 1] << 8));
        v = static_cast<float>(s) / 32768.0f;
      } else {  // 8-bit unsigned
        v = (static_cast<float>(p[off]) - 128.0f) / 128.0f;
      }
      acc += v;
    }
    clip.samples[i] = acc / static_cast<float>(channels);
  }
  return clip;
}

/// Writes mono or interleaved multi-channel 16-bit PCM.
inline void write_wav_16bit(const std::string& path, std::span<const float> samples,
                            int sample_rate, int channels = 1) {
  if (samples.empty()) throw Error("wav: refusing to write empty audio");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(cat("wav: cannot write '", path, "'"));

  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  io::write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  io::write_u32(os, 16);
  const std::uint16_t fmt_tag = 1, bits = 16;
  const std::uint16_t ch = static_cast<std::uint16_t>(channels);
  unsigned char u16[2];
  auto put_u16 = [&](std::uint16_t v) {
    u16[0] = static_cast<unsigned char>(v & 0xff);
    u16[1] = static_cast<unsigned char>(v >> 8);
    os.write(reinterpret_cast<const char*>(u16), 2);
  };
  put_u16(fmt_tag);
  put_u16(ch);
  io::write_u32(os, static_cast<std::uint32_t>(sample_rate));
  io::write_u32(os, static_cast<std::uint32_t>(sample_rate * channels * 2));
  put_u16(static_cast<std::uint16_t>(channels * 2));
  put_u16(bits);
  os.write("data", 4);
  io::write_u32(os, data_bytes);
  for (float s : samples) {
    const float clamped = std::min(1.0f, std::max(-1.0f, s));
    const std::int16_t q = static_cast<std::int16_t>(std::lrint(clamped * 32767.0f));
    put_u16(static_cast<std::uint16_t>(q));
  }
  if (!os) throw Error(cat("wav: failed writing '", path, "'"));
}

}  // namespace kws

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
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace kws {

/// Error type thrown by every fallible operation in the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename... Args>
[[nodiscard]] std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

// Little-endian binary I/O. File formats (KWSF features, KWSC checkpoints)
// are defined little-endian regardless of host byte order.
namespace io {

inline bool host_is_little_endian() {
  const std::uint32_t probe = 1u;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xffu),
                        static_cast<unsigned char>((v >> 8) & 0xffu),
                        static_cast<unsigned char>((v >> 16) & 0xffu),
                        static_cast<unsigned char>((v >> 24) & 0xffu)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw Error("unexpected end of stream while reading u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

inline float read_f32(std::istream& is) {
  const std::uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline void write_f32_array(std::ostream& os, const float* p, std::size_t n) {
  if (host_is_little_endian()) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
  } else {
    for (std::size_t i = 0; i < n; ++i) write_f32(os, p[i]);
  }
}

inline void read_f32_array(std::istream& is, float* p, std::size_t n) {
  if (host_is_little_endian()) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 4));
    if (!is) throw Error("unexpected end of stream while reading f32 array");
  } else {
    for (std::size_t i = 0; i < n; ++i) p[i] = read_f32(is);
  }
}

}  // namespace io

}  // namespace kws

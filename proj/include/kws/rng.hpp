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
#include <random>

#include "kws/common.hpp"

namespace kws {

/// Seeded deterministic generator. The engine is std::mt19937_64, whose
/// output sequence is fully specified by the C++ standard, and the
/// uniform transforms below are written out explicitly instead of using
/// std::uniform_*_distribution (whose algorithms are implementation
/// defined). Identical seeds therefore produce identical draw sequences
/// on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), from the top 53 bits of one engine draw.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n). Plain modulo reduction; the bias is below
  /// 2^-32 for every n used in this library.
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw Error("Rng::uniform_index: empty range");
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace kws

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

#include <cmath>
#include <cstdint>
#include <vector>

#include "kws/rng.hpp"
#include "kws/tensor.hpp"

namespace kws {

/// Normalized (Glorot) initialization: uniform in [-L, L] with
/// L = sqrt(6 / (fan_in + fan_out)), returned as a (fan_in, fan_out)
/// matrix filled in row-major order.
template <typename T>
Tensor<T> normalized_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0)
    throw Error("normalized_init: fan dimensions must be >= 1");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> w({fan_in, fan_out});
  for (std::size_t i = 0; i < w.numel(); ++i)
    w[i] = static_cast<T>(rng.uniform(-limit, limit));
  return w;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators, one pair per parameter tensor,
/// plus the shared step counter.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const std::vector<Tensor<T>*>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Tensor<T>* p : params) {
      st.m.emplace_back(p->shape());
      st.v.emplace_back(p->shape());
    }
    return st;
  }
};

/// L2 norm over the concatenation of all tensors.
template <typename T>
double global_norm(const std::vector<const Tensor<T>*>& grads) {
  double sq = 0.0;
  for (const Tensor<T>* g : grads)
    for (const T& x : g->values()) sq += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sq);
}

/// Scales every gradient by max_norm / norm when the global norm exceeds
/// max_norm, otherwise leaves them untouched. Returns the pre-clip norm.
///
/// Norms within one part in 1e-6 of the bound are treated as already
/// clipped; that slack absorbs the rounding of a previous clip, so the
/// operation is idempotent (a second application is a bitwise no-op).
template <typename T>
double clip_global_norm(const std::vector<Tensor<T>*>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw Error("clip_global_norm: max_norm must be > 0");
  std::vector<const Tensor<T>*> view(grads.begin(), grads.end());
  const double norm = global_norm(view);
  if (!std::isfinite(norm)) throw Error("clip_global_norm: non-finite gradient norm");
  if (norm > max_norm * (1.0 + 1e-6)) {
    const T scale = static_cast<T>(max_norm / norm);
    for (Tensor<T>* g : grads)
      for (T& x : g->values()) x *= scale;
  }
  return norm;
}

/// One coupled Adam-with-L2 update: the effective gradient is
/// grad + l2 * param, then the bias-corrected Adam rule is applied and
/// the step counter advances by one.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params,
               const std::vector<const Tensor<T>*>& grads, AdamState<T>& state,
               double lr, double l2 = 0.0, const AdamConfig& cfg = {}) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw Error("adam_step: parameter/gradient/state count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.m[i]))
      throw Error(cat("adam_step: shape mismatch at tensor ", i));
    if (!all_finite(*grads[i]))
      throw Error(cat("adam_step: non-finite gradient at tensor ", i));
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->data();
    const T* g = grads[i]->data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    const std::size_t n = params[i]->numel();
    for (std::size_t k = 0; k < n; ++k) {
      const T eff = g[k] + static_cast<T>(l2) * p[k];
      m[k] = static_cast<T>(cfg.beta1) * m[k] + static_cast<T>(1.0 - cfg.beta1) * eff;
      v[k] = static_cast<T>(cfg.beta2) * v[k] + static_cast<T>(1.0 - cfg.beta2) * eff * eff;
      const T mhat = m[k] / static_cast<T>(bc1);
      const T vhat = v[k] / static_cast<T>(bc2);
      p[k] -= static_cast<T>(lr) * mhat / (std::sqrt(vhat) + static_cast<T>(cfg.eps));
    }
  }
}

}  // namespace kws

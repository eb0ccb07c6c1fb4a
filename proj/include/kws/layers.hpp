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
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "kws/common.hpp"
#include "kws/optim.hpp"
#include "kws/rng.hpp"
#include "kws/tensor.hpp"

namespace kws {

// ---------------------------------------------------------------------------
// Small dense linear algebra. Fixed loop order keeps results reproducible.

/// C = A (m x k) * B (k x n).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw Error(cat("matmul: incompatible shapes (", a.dim(0), "x", a.dim(1), ") * (", b.dim(0),
                    "x", b.dim(1), ")"));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a(i, p);
      for (std::size_t j = 0; j < n; ++j) c(i, j) += av * b(p, j);
    }
  return c;
}

/// C = A (m x k) * B^T (n x k).
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw Error("matmul_nt: incompatible shapes");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor<T> c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(j, p);
      c(i, j) = acc;
    }
  return c;
}

/// C += A^T (k x m) * B (k x n); used to accumulate weight gradients.
template <typename T>
void matmul_tn_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0) || c.dim(0) != a.dim(1) ||
      c.dim(1) != b.dim(1))
    throw Error("matmul_tn_acc: incompatible shapes");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a(p, i);
      for (std::size_t j = 0; j < n; ++j) c(i, j) += av * b(p, j);
    }
}

/// dst += src, elementwise.
template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  if (!dst.same_shape(src)) throw Error("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < dst.numel(); ++i) dst.values()[i] += src.values()[i];
}

namespace detail {

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

/// rows x cols matrix of concatenated [a | b] rows.
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dim(0) != b.dim(0)) throw Error("concat_cols: row mismatch");
  Tensor<T> out({a.dim(0), a.dim(1) + b.dim(1)});
  for (std::size_t r = 0; r < a.dim(0); ++r) {
    for (std::size_t c = 0; c < a.dim(1); ++c) out(r, c) = a(r, c);
    for (std::size_t c = 0; c < b.dim(1); ++c) out(r, a.dim(1) + c) = b(r, c);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fully connected layer.

template <typename T>
struct FcParams {
  Tensor<T> w;  // in x out
  Tensor<T> b;  // out

  static FcParams zeros(std::size_t in, std::size_t out) {
    return FcParams{Tensor<T>({in, out}), Tensor<T>({out})};
  }
  static FcParams init(std::size_t in, std::size_t out, Rng& rng) {
    return FcParams{normalized_init<T>(in, out, rng), Tensor<T>({out})};
  }
  std::size_t param_count() const { return w.numel() + b.numel(); }
  std::vector<Tensor<T>*> tensors() { return {&w, &b}; }
};

/// y = x * w + b (bias broadcast over rows).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Tensor<T> y = matmul(x, w);
  for (std::size_t r = 0; r < y.dim(0); ++r)
    for (std::size_t c = 0; c < y.dim(1); ++c) y(r, c) += b[c];
  return y;
}

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& x, const FcParams<T>& p) {
  return linear(x, p.w, p.b);
}

/// Returns dX; accumulates dW, db into `grads`.
template <typename T>
Tensor<T> fc_backward(const Tensor<T>& dy, const Tensor<T>& x, const FcParams<T>& p,
                      FcParams<T>& grads) {
  matmul_tn_acc(x, dy, grads.w);
  for (std::size_t r = 0; r < dy.dim(0); ++r)
    for (std::size_t c = 0; c < dy.dim(1); ++c) grads.b[c] += dy(r, c);
  return matmul_nt(dy, p.w);
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& x) {
  if (!dy.same_shape(x)) throw Error("relu_backward: shape mismatch");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.numel(); ++i)
    if (!(x.values()[i] > T(0))) dx.values()[i] = T(0);
  return dx;
}

// ---------------------------------------------------------------------------
// LSTM cell (no peepholes, no projection). Gate weights act on the
// concatenated [x, h_prev] row, stored as (in + n) x n per gate.

template <typename T>
struct LstmParams {
  Tensor<T> w_i, w_f, w_g, w_o;  // (in + n) x n
  Tensor<T> b_i, b_f, b_g, b_o;  // n

  static LstmParams zeros(std::size_t in, std::size_t n) {
    const std::size_t rows = in + n;
    return LstmParams{Tensor<T>({rows, n}), Tensor<T>({rows, n}), Tensor<T>({rows, n}),
                      Tensor<T>({rows, n}), Tensor<T>({n}),       Tensor<T>({n}),
                      Tensor<T>({n}),       Tensor<T>({n})};
  }
  static LstmParams init(std::size_t in, std::size_t n, Rng& rng) {
    const std::size_t rows = in + n;
    LstmParams p = zeros(in, n);
    p.w_i = normalized_init<T>(rows, n, rng);
    p.w_f = normalized_init<T>(rows, n, rng);
    p.w_g = normalized_init<T>(rows, n, rng);
    p.w_o = normalized_init<T>(rows, n, rng);
    return p;
  }
  std::size_t hidden_dim() const { return b_i.numel(); }
  std::size_t input_dim() const { return w_i.dim(0) - hidden_dim(); }
  std::size_t param_count() const {
    return w_i.numel() + w_f.numel() + w_g.numel() + w_o.numel() + b_i.numel() + b_f.numel() +
           b_g.numel() + b_o.numel();
  }
  std::vector<Tensor<T>*> tensors() {
    return {&w_i, &w_f, &w_g, &w_o, &b_i, &b_f, &b_g, &b_o};
  }
};

template <typename T>
struct LstmCache {
  Tensor<T> z;       // N x (in + n): [x, h_prev]
  Tensor<T> c_prev;  // N x n
  Tensor<T> i, f, g, o, c, tanh_c;
};

template <typename T>
void lstm_cell_forward(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                       const LstmParams<T>& p, Tensor<T>& h_out, Tensor<T>& c_out,
                       LstmCache<T>* cache = nullptr) {
  const std::size_t n = p.hidden_dim();
  if (x.dim(1) != p.input_dim() || h_prev.dim(1) != n || c_prev.dim(1) != n)
    throw Error("lstm: input width mismatch");
  const Tensor<T> z = detail::concat_cols(x, h_prev);
  Tensor<T> i = linear(z, p.w_i, p.b_i);
  Tensor<T> f = linear(z, p.w_f, p.b_f);
  Tensor<T> g = linear(z, p.w_g, p.b_g);
  Tensor<T> o = linear(z, p.w_o, p.b_o);
  for (auto& v : i.values()) v = detail::sigmoid(v);
  for (auto& v : f.values()) v = detail::sigmoid(v);
  for (auto& v : g.values()) v = std::tanh(v);
  for (auto& v : o.values()) v = detail::sigmoid(v);
  Tensor<T> c({x.dim(0), n});
  Tensor<T> tanh_c({x.dim(0), n});
  h_out = Tensor<T>({x.dim(0), n});
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t k = 0; k < n; ++k) {
      c(r, k) = f(r, k) * c_prev(r, k) + i(r, k) * g(r, k);
      tanh_c(r, k) = std::tanh(c(r, k));
      h_out(r, k) = o(r, k) * tanh_c(r, k);
    }
  c_out = c;
  if (cache != nullptr)
    *cache = LstmCache<T>{z, c_prev, std::move(i), std::move(f), std::move(g), std::move(o),
                          std::move(c), std::move(tanh_c)};
}

/// Backward through one cell step. dh/dc are the gradients flowing into
/// h_out/c_out; outputs are written to dx/dh_prev/dc_prev and parameter
/// gradients are accumulated into `grads`.
template <typename T>
void lstm_cell_backward(const Tensor<T>& dh, const Tensor<T>& dc_in, const LstmCache<T>& cache,
                        const LstmParams<T>& p, LstmParams<T>& grads, Tensor<T>& dx,
                        Tensor<T>& dh_prev, Tensor<T>& dc_prev) {
  const std::size_t rows = dh.dim(0), n = dh.dim(1);
  const std::size_t in = p.input_dim();
  Tensor<T> da_i({rows, n}), da_f({rows, n}), da_g({rows, n}), da_o({rows, n});
  dc_prev = Tensor<T>({rows, n});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      const T i = cache.i(r, k), f = cache.f(r, k), g = cache.g(r, k), o = cache.o(r, k);
      const T tc = cache.tanh_c(r, k);
      const T dc = dc_in(r, k) + dh(r, k) * o * (T(1) - tc * tc);
      da_o(r, k) = dh(r, k) * tc * o * (T(1) - o);
      da_i(r, k) = dc * g * i * (T(1) - i);
      da_f(r, k) = dc * cache.c_prev(r, k) * f * (T(1) - f);
      da_g(r, k) = dc * i * (T(1) - g * g);
      dc_prev(r, k) = dc * f;
    }
  matmul_tn_acc(cache.z, da_i, grads.w_i);
  matmul_tn_acc(cache.z, da_f, grads.w_f);
  matmul_tn_acc(cache.z, da_g, grads.w_g);
  matmul_tn_acc(cache.z, da_o, grads.w_o);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      grads.b_i[k] += da_i(r, k);
      grads.b_f[k] += da_f(r, k);
      grads.b_g[k] += da_g(r, k);
      grads.b_o[k] += da_o(r, k);
    }
  Tensor<T> dz = matmul_nt(da_i, p.w_i);
  add_inplace(dz, matmul_nt(da_f, p.w_f));
  add_inplace(dz, matmul_nt(da_g, p.w_g));
  add_inplace(dz, matmul_nt(da_o, p.w_o));
  dx = Tensor<T>({rows, in});
  dh_prev = Tensor<T>({rows, n});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < in; ++c) dx(r, c) = dz(r, c);
    for (std::size_t c = 0; c < n; ++c) dh_prev(r, c) = dz(r, in + c);
  }
}

// ---------------------------------------------------------------------------
// GRU cell. Update and reset gates act on [x, h_prev]; the candidate acts
// on [x, r * h_prev]. h' = (1 - z) * h_prev + z * candidate.

template <typename T>
struct GruParams {
  Tensor<T> w_z, w_r, w_c;  // (in + n) x n
  Tensor<T> b_z, b_r, b_c;  // n

  static GruParams zeros(std::size_t in, std::size_t n) {
    const std::size_t rows = in + n;
    return GruParams{Tensor<T>({rows, n}), Tensor<T>({rows, n}), Tensor<T>({rows, n}),
                     Tensor<T>({n}),       Tensor<T>({n}),       Tensor<T>({n})};
  }
  static GruParams init(std::size_t in, std::size_t n, Rng& rng) {
    const std::size_t rows = in + n;
    GruParams p = zeros(in, n);
    p.w_z = normalized_init<T>(rows, n, rng);
    p.w_r = normalized_init<T>(rows, n, rng);
    p.w_c = normalized_init<T>(rows, n, rng);
    return p;
  }
  std::size_t hidden_dim() const { return b_z.numel(); }
  std::size_t input_dim() const { return w_z.dim(0) - hidden_dim(); }
  std::size_t param_count() const {
    return w_z.numel() + w_r.numel() + w_c.numel() + b_z.numel() + b_r.numel() + b_c.numel();
  }
  std::vector<Tensor<T>*> tensors() { return {&w_z, &w_r, &w_c, &b_z, &b_r, &b_c}; }
};

template <typename T>
struct GruCache {
  Tensor<T> zin;     // N x (in + n): [x, h_prev]
  Tensor<T> uin;     // N x (in + n): [x, r * h_prev]
  Tensor<T> h_prev;  // N x n
  Tensor<T> zg, rg, cand;
};

template <typename T>
void gru_cell_forward(const Tensor<T>& x, const Tensor<T>& h_prev, const GruParams<T>& p,
                      Tensor<T>& h_out, GruCache<T>* cache = nullptr) {
  const std::size_t n = p.hidden_dim();
  if (x.dim(1) != p.input_dim() || h_prev.dim(1) != n) throw Error("gru: input width mismatch");
  const Tensor<T> zin = detail::concat_cols(x, h_prev);
  Tensor<T> zg = linear(zin, p.w_z, p.b_z);
  Tensor<T> rg = linear(zin, p.w_r, p.b_r);
  for (auto& v : zg.values()) v = detail::sigmoid(v);
  for (auto& v : rg.values()) v = detail::sigmoid(v);
  Tensor<T> rh({x.dim(0), n});
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t k = 0; k < n; ++k) rh(r, k) = rg(r, k) * h_prev(r, k);
  const Tensor<T> uin = detail::concat_cols(x, rh);
  Tensor<T> cand = linear(uin, p.w_c, p.b_c);
  for (auto& v : cand.values()) v = std::tanh(v);
  h_out = Tensor<T>({x.dim(0), n});
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t k = 0; k < n; ++k)
      h_out(r, k) = (T(1) - zg(r, k)) * h_prev(r, k) + zg(r, k) * cand(r, k);
  if (cache != nullptr)
    *cache = GruCache<T>{zin, uin, h_prev, std::move(zg), std::move(rg), std::move(cand)};
}

template <typename T>
void gru_cell_backward(const Tensor<T>& dh, const GruCache<T>& cache, const GruParams<T>& p,
                       GruParams<T>& grads, Tensor<T>& dx, Tensor<T>& dh_prev) {
  const std::size_t rows = dh.dim(0), n = dh.dim(1);
  const std::size_t in = p.input_dim();
  Tensor<T> da_z({rows, n}), da_c({rows, n});
  dh_prev = Tensor<T>({rows, n});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      const T z = cache.zg(r, k), c = cache.cand(r, k), hp = cache.h_prev(r, k);
      da_z(r, k) = dh(r, k) * (c - hp) * z * (T(1) - z);
      da_c(r, k) = dh(r, k) * z * (T(1) - c * c);
      dh_prev(r, k) = dh(r, k) * (T(1) - z);
    }
  // Candidate path: gradient w.r.t. [x, r * h_prev].
  matmul_tn_acc(cache.uin, da_c, grads.w_c);
  Tensor<T> du = matmul_nt(da_c, p.w_c);
  Tensor<T> da_r({rows, n});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      const T drh = du(r, in + k);
      da_r(r, k) = drh * cache.h_prev(r, k) * cache.rg(r, k) * (T(1) - cache.rg(r, k));
      dh_prev(r, k) += drh * cache.rg(r, k);
    }
  matmul_tn_acc(cache.zin, da_z, grads.w_z);
  matmul_tn_acc(cache.zin, da_r, grads.w_r);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      grads.b_z[k] += da_z(r, k);
      grads.b_r[k] += da_r(r, k);
      grads.b_c[k] += da_c(r, k);
    }
  Tensor<T> dzin = matmul_nt(da_z, p.w_z);
  add_inplace(dzin, matmul_nt(da_r, p.w_r));
  dx = Tensor<T>({rows, in});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < in; ++c) dx(r, c) = dzin(r, c) + du(r, c);
    for (std::size_t c = 0; c < n; ++c) dh_prev(r, c) += dzin(r, in + c);
  }
}

// ---------------------------------------------------------------------------
// 2-D convolution over (time, frequency, channel) maps. Time is padded
// causally (an output frame sees only the current and previous kt - 1
// input frames); frequency uses same-padding with a stride, splitting the
// total pad as left = total / 2, right = the remainder.

template <typename T>
struct Conv2dParams {
  Tensor<T> w;  // kt x kf x in_ch x out_ch
  Tensor<T> b;  // out_ch
  int stride_f = 1;

  static Conv2dParams zeros(std::size_t kt, std::size_t kf, std::size_t in_ch, std::size_t out_ch,
                            int stride_f) {
    return Conv2dParams{Tensor<T>({kt, kf, in_ch, out_ch}), Tensor<T>({out_ch}), stride_f};
  }
  static Conv2dParams init(std::size_t kt, std::size_t kf, std::size_t in_ch, std::size_t out_ch,
                           int stride_f, Rng& rng) {
    Conv2dParams p = zeros(kt, kf, in_ch, out_ch, stride_f);
    const Tensor<T> flat = normalized_init<T>(kt * kf * in_ch, out_ch, rng);
    p.w = flat;
    p.w.reshape({kt, kf, in_ch, out_ch});
    return p;
  }
  std::size_t kt() const { return w.dim(0); }
  std::size_t kf() const { return w.dim(1); }
  std::size_t in_ch() const { return w.dim(2); }
  std::size_t out_ch() const { return w.dim(3); }
  std::size_t param_count() const { return w.numel() + b.numel(); }
  std::vector<Tensor<T>*> tensors() { return {&w, &b}; }
};

inline std::size_t conv_out_freq(std::size_t f_in, int stride) {
  return (f_in + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
}

inline int conv_pad_left(std::size_t f_in, std::size_t kf, int stride) {
  const std::size_t f_out = conv_out_freq(f_in, stride);
  const long total = static_cast<long>((f_out - 1) * static_cast<std::size_t>(stride) + kf) -
                     static_cast<long>(f_in);
  return static_cast<int>(total > 0 ? total / 2 : 0);
}

/// x: T x F x in_ch -> y: T x conv_out_freq(F) x out_ch.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Conv2dParams<T>& p) {
  if (x.rank() != 3 || x.dim(2) != p.in_ch()) throw Error("conv2d: input shape mismatch");
  const std::size_t t_len = x.dim(0), f_in = x.dim(1);
  const std::size_t f_out = conv_out_freq(f_in, p.stride_f);
  const int pad_l = conv_pad_left(f_in, p.kf(), p.stride_f);
  Tensor<T> y({t_len, f_out, p.out_ch()});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t fo = 0; fo < f_out; ++fo)
      for (std::size_t co = 0; co < p.out_ch(); ++co) {
        T acc = p.b[co];
        for (std::size_t dt = 0; dt < p.kt(); ++dt) {
          const long ti = static_cast<long>(t) - static_cast<long>(p.kt() - 1) +
                          static_cast<long>(dt);
          if (ti < 0) continue;
          for (std::size_t df = 0; df < p.kf(); ++df) {
            const long fi = static_cast<long>(fo) * p.stride_f - pad_l + static_cast<long>(df);
            if (fi < 0 || fi >= static_cast<long>(f_in)) continue;
            for (std::size_t ci = 0; ci < p.in_ch(); ++ci)
              acc += x(static_cast<std::size_t>(ti), static_cast<std::size_t>(fi), ci) *
                     p.w(dt, df, ci, co);
          }
        }
        y(t, fo, co) = acc;
      }
  return y;
}

/// Returns dX; accumulates dW, db into `grads`.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& dy, const Tensor<T>& x, const Conv2dParams<T>& p,
                          Conv2dParams<T>& grads) {
  const std::size_t t_len = x.dim(0), f_in = x.dim(1);
  const std::size_t f_out = conv_out_freq(f_in, p.stride_f);
  if (dy.dim(0) != t_len || dy.dim(1) != f_out || dy.dim(2) != p.out_ch())
    throw Error("conv2d_backward: gradient shape mismatch");
  const int pad_l = conv_pad_left(f_in, p.kf(), p.stride_f);
  Tensor<T> dx({t_len, f_in, p.in_ch()});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t fo = 0; fo < f_out; ++fo)
      for (std::size_t co = 0; co < p.out_ch(); ++co) {
        const T g = dy(t, fo, co);
        grads.b[co] += g;
        for (std::size_t dt = 0; dt < p.kt(); ++dt) {
          const long ti = static_cast<long>(t) - static_cast<long>(p.kt() - 1) +
                          static_cast<long>(dt);
          if (ti < 0) continue;
          for (std::size_t df = 0; df < p.kf(); ++df) {
            const long fi = static_cast<long>(fo) * p.stride_f - pad_l + static_cast<long>(df);
            if (fi < 0 || fi >= static_cast<long>(f_in)) continue;
            for (std::size_t ci = 0; ci < p.in_ch(); ++ci) {
              grads.w(dt, df, ci, co) +=
                  x(static_cast<std::size_t>(ti), static_cast<std::size_t>(fi), ci) * g;
              dx(static_cast<std::size_t>(ti), static_cast<std::size_t>(fi), ci) +=
                  p.w(dt, df, ci, co) * g;
            }
          }
        }
      }
  return dx;
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy.

/// Numerically stable softmax applied to each row in place.
template <typename T>
void softmax_rows(Tensor<T>& x) {
  if (x.rank() != 2) throw Error("softmax_rows: expected a matrix");
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    T mx = x(r, 0);
    for (std::size_t c = 1; c < x.dim(1); ++c) mx = std::max(mx, x(r, c));
    T sum = T(0);
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      x(r, c) = std::exp(x(r, c) - mx);
      sum += x(r, c);
    }
    for (std::size_t c = 0; c < x.dim(1); ++c) x(r, c) /= sum;
  }
}

/// Mean cross-entropy of row-wise softmax(logits) against integer labels.
/// If dlogits is non-null it receives (softmax - onehot) / N.
template <typename T>
T softmax_xent(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* dlogits) {
  if (logits.rank() != 2 || labels.size() != logits.dim(0))
    throw Error("softmax_xent: logits/labels mismatch");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor<T> probs = logits;
  softmax_rows(probs);
  T loss = T(0);
  for (std::size_t r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw Error(cat("softmax_xent: label ", y, " out of range [0, ", c, ")"));
    loss -= std::log(std::max(probs(r, static_cast<std::size_t>(y)),
                              std::numeric_limits<T>::min()));
  }
  loss /= static_cast<T>(n);
  if (dlogits != nullptr) {
    *dlogits = probs;
    for (std::size_t r = 0; r < n; ++r) {
      (*dlogits)(r, static_cast<std::size_t>(labels[r])) -= T(1);
      for (std::size_t k = 0; k < c; ++k) (*dlogits)(r, k) /= static_cast<T>(n);
    }
  }
  return loss;
}

}  // namespace kws

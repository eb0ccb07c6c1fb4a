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
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kws/common.hpp"
#include "kws/layers.hpp"
#include "kws/rng.hpp"
#include "kws/tensor.hpp"

namespace kws {

/// GRU-based encoders (plain GRU and conv+GRU) are followed by a linear
/// projection of this width; attention and the output head then operate
/// at this dimension. LSTM encoders attend directly at their node width.
inline constexpr int kProjectionDim = 64;

/// Convolutional front end of the conv+GRU encoder: 20 frames x 5 bands,
/// frequency stride 2.
inline constexpr int kConvKernelT = 20;
inline constexpr int kConvKernelF = 5;
inline constexpr int kConvStrideF = 2;

struct ModelConfig {
  // "attention": recurrent encoder + attention pooling + 2-way head.
  // "deep_kws": per-frame posterior model with smoothing + confidence.
  std::string arch = "attention";
  // attention: "lstm" | "gru" | "crnn".  deep_kws: "dnn" | "lstm" | "gru".
  std::string encoder = "gru";
  int layers = 2;  // recurrent layers, or hidden layers for the dnn
  int nodes = 64;
  std::string attention = "soft";  // "soft" | "average"
  int conv_filters = 8;            // crnn only
  int feature_dim = 40;
  int num_classes = 2;  // attention: exactly 2; deep_kws: filler + subwords

  // deep_kws runtime parameters.
  int context_past = 15;   // dnn input context, frames before t
  int context_future = 5;  // frames after t (edge-replicated)
  int smooth_frames = 30;  // trailing mean window for posteriors
  int max_window = 100;    // trailing max window for confidence

  void validate() const {
    if (arch != "attention" && arch != "deep_kws")
      throw Error(cat("model: unknown arch '", arch, "'"));
    if (arch == "attention") {
      if (encoder != "lstm" && encoder != "gru" && encoder != "crnn")
        throw Error(cat("model: unknown attention encoder '", encoder, "'"));
      if (attention != "soft" && attention != "average")
        throw Error(cat("model: unknown attention type '", attention, "'"));
      if (num_classes != 2)
        throw Error("model: the attention detector is a 2-class model (non-keyword, keyword)");
    } else {
      if (encoder != "dnn" && encoder != "lstm" && encoder != "gru")
        throw Error(cat("model: unknown deep_kws encoder '", encoder, "'"));
      if (num_classes < 2) throw Error("model: deep_kws needs at least 2 classes");
    }
    if (layers < 1) throw Error("model: layers must be >= 1");
    if (nodes < 1) throw Error("model: nodes must be >= 1");
    if (conv_filters < 1) throw Error("model: conv_filters must be >= 1");
    if (feature_dim < 1) throw Error("model: feature_dim must be >= 1");
    if (context_past < 0 || context_future < 0)
      throw Error("model: context sizes must be non-negative");
    if (smooth_frames < 1 || max_window < 1)
      throw Error("model: smoothing and confidence windows must be >= 1");
  }

  bool is_attention() const { return arch == "attention"; }
  bool uses_conv() const { return is_attention() && encoder == "crnn"; }
  bool uses_gru() const { return encoder == "gru" || encoder == "crnn"; }
  bool uses_lstm() const { return encoder == "lstm"; }
  bool uses_dnn() const { return encoder == "dnn"; }
  bool has_soft_attention() const { return is_attention() && attention == "soft"; }
  /// GRU-based stacks are projected; LSTM attends at its own width.
  bool has_projection() const { return uses_gru(); }

  /// Width of the representation entering attention / the output head.
  int head_input_dim() const {
    if (uses_dnn() || has_projection()) return uses_dnn() ? nodes : kProjectionDim;
    return nodes;
  }
  /// Width of the rows entering the recurrent stack.
  int rnn_input_dim() const {
    if (uses_conv())
      return static_cast<int>(conv_out_freq(feature_dim, kConvStrideF)) * conv_filters;
    return feature_dim;
  }

  std::string to_record() const {
    std::ostringstream os;
    os << "arch=" << arch << "\nencoder=" << encoder << "\nlayers=" << layers
       << "\nnodes=" << nodes << "\nattention=" << attention
       << "\nconv_filters=" << conv_filters << "\nfeature_dim=" << feature_dim
       << "\nnum_classes=" << num_classes << "\ncontext_past=" << context_past
       << "\ncontext_future=" << context_future << "\nsmooth_frames=" << smooth_frames
       << "\nmax_window=" << max_window << "\n";
    return os.str();
  }

  static ModelConfig from_record(const std::string& record) {
    ModelConfig cfg;
    std::istringstream is(record);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(cat("model: malformed config line '", line, "'"));
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      try {
        if (key == "arch") cfg.arch = val;
        else if (key == "encoder") cfg.encoder = val;
        else if (key == "layers") cfg.layers = std::stoi(val);
        else if (key == "nodes") cfg.nodes = std::stoi(val);
        else if (key == "attention") cfg.attention = val;
        else if (key == "conv_filters") cfg.conv_filters = std::stoi(val);
        else if (key == "feature_dim") cfg.feature_dim = std::stoi(val);
        else if (key == "num_classes") cfg.num_classes = std::stoi(val);
        else if (key == "context_past") cfg.context_past = std::stoi(val);
        else if (key == "context_future") cfg.context_future = std::stoi(val);
        else if (key == "smooth_frames") cfg.smooth_frames = std::stoi(val);
        else if (key == "max_window") cfg.max_window = std::stoi(val);
        else throw Error(cat("model: unknown config key '", key, "'"));
      } catch (const std::invalid_argument&) {
        throw Error(cat("model: bad value for config key '", key, "': '", val, "'"));
      }
    }
    cfg.validate();
    return cfg;
  }
};

/// Soft attention over encoder states: e_t = v . tanh(h_t W + b),
/// alpha = softmax(e), context = sum_t alpha_t h_t.
template <typename T>
struct AttentionParams {
  FcParams<T> fc;  // d x d plus bias
  Tensor<T> v;     // d
};

template <typename T>
struct Model {
  ModelConfig cfg;
  std::optional<Conv2dParams<T>> conv;
  std::vector<LstmParams<T>> lstm;
  std::vector<GruParams<T>> gru;
  std::optional<FcParams<T>> proj;
  std::optional<AttentionParams<T>> att;
  std::vector<FcParams<T>> dnn;  // hidden layers of the dnn posterior model
  FcParams<T> head;

  /// Stable registry of all parameter tensors; ordering defines the
  /// checkpoint layout and the optimizer slot layout.
  std::vector<std::pair<std::string, Tensor<T>*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    if (conv) {
      out.emplace_back("conv.w", &conv->w);
      out.emplace_back("conv.b", &conv->b);
    }
    for (std::size_t l = 0; l < lstm.size(); ++l) {
      const std::string p = cat("rnn", l, ".");
      out.emplace_back(p + "w_i", &lstm[l].w_i);
      out.emplace_back(p + "w_f", &lstm[l].w_f);
      out.emplace_back(p + "w_g", &lstm[l].w_g);
      out.emplace_back(p + "w_o", &lstm[l].w_o);
      out.emplace_back(p + "b_i", &lstm[l].b_i);
      out.emplace_back(p + "b_f", &lstm[l].b_f);
      out.emplace_back(p + "b_g", &lstm[l].b_g);
      out.emplace_back(p + "b_o", &lstm[l].b_o);
    }
    for (std::size_t l = 0; l < gru.size(); ++l) {
      const std::string p = cat("rnn", l, ".");
      out.emplace_back(p + "w_z", &gru[l].w_z);
      out.emplace_back(p + "w_r", &gru[l].w_r);
      out.emplace_back(p + "w_c", &gru[l].w_c);
      out.emplace_back(p + "b_z", &gru[l].b_z);
      out.emplace_back(p + "b_r", &gru[l].b_r);
      out.emplace_back(p + "b_c", &gru[l].b_c);
    }
    if (proj) {
      out.emplace_back("proj.w", &proj->w);
      out.emplace_back("proj.b", &proj->b);
    }
    if (att) {
      out.emplace_back("att.w", &att->fc.w);
      out.emplace_back("att.b", &att->fc.b);
      out.emplace_back("att.v", &att->v);
    }
    for (std::size_t l = 0; l < dnn.size(); ++l) {
      out.emplace_back(cat("dnn", l, ".w"), &dnn[l].w);
      out.emplace_back(cat("dnn", l, ".b"), &dnn[l].b);
    }
    out.emplace_back("head.w", &head.w);
    out.emplace_back("head.b", &head.b);
    return out;
  }

  std::vector<Tensor<T>*> tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
  }

  std::size_t param_numel() {
    std::size_t total = 0;
    for (auto* t : tensors()) total += t->numel();
    return total;
  }
};

/// Closed-form parameter count for a configuration. Kept independent of
/// model construction so the two can cross-check each other.
inline std::size_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const auto lstm_cell = [](std::size_t in, std::size_t n) { return 4 * (n * (in + n) + n); };
  const auto gru_cell = [](std::size_t in, std::size_t n) { return 3 * (n * (in + n) + n); };
  const auto fc = [](std::size_t in, std::size_t out) { return in * out + out; };
  const std::size_t n = static_cast<std::size_t>(cfg.nodes);
  const std::size_t f = static_cast<std::size_t>(cfg.feature_dim);
  const std::size_t c = static_cast<std::size_t>(cfg.num_classes);
  std::size_t total = 0;
  if (cfg.uses_dnn()) {
    const std::size_t ctx = static_cast<std::size_t>(cfg.context_past + 1 + cfg.context_future);
    std::size_t in = ctx * f;
    for (int l = 0; l < cfg.layers; ++l) {
      total += fc(in, n);
      in = n;
    }
    total += fc(n, c);
    return total;
  }
  if (cfg.uses_conv())
    total += static_cast<std::size_t>(cfg.conv_filters) *
                 (kConvKernelT * kConvKernelF * 1) +
             static_cast<std::size_t>(cfg.conv_filters);
  std::size_t in = static_cast<std::size_t>(cfg.rnn_input_dim());
  for (int l = 0; l < cfg.layers; ++l) {
    total += cfg.uses_lstm() ? lstm_cell(in, n) : gru_cell(in, n);
    in = n;
  }
  if (cfg.has_projection()) total += fc(n, kProjectionDim);
  const std::size_t d = static_cast<std::size_t>(cfg.head_input_dim());
  if (cfg.has_soft_attention()) total += d * d + 2 * d;
  total += fc(d, c);
  return total;
}

/// Builds a model. With `zero_init` all parameters are zero (used before
/// loading a checkpoint); otherwise weights use normalized initialization
/// and biases start at zero.
template <typename T>
Model<T> build_model(const ModelConfig& cfg, Rng& rng, bool zero_init = false) {
  cfg.validate();
  Model<T> m;
  m.cfg = cfg;
  const std::size_t n = static_cast<std::size_t>(cfg.nodes);
  const std::size_t f = static_cast<std::size_t>(cfg.feature_dim);
  const std::size_t c = static_cast<std::size_t>(cfg.num_classes);
  if (cfg.uses_dnn()) {
    const std::size_t ctx = static_cast<std::size_t>(cfg.context_past + 1 + cfg.context_future);
    std::size_t in = ctx * f;
    for (int l = 0; l < cfg.layers; ++l) {
      m.dnn.push_back(zero_init ? FcParams<T>::zeros(in, n) : FcParams<T>::init(in, n, rng));
      in = n;
    }
    m.head = zero_init ? FcParams<T>::zeros(n, c) : FcParams<T>::init(n, c, rng);
    return m;
  }
  if (cfg.uses_conv()) {
    const std::size_t co = static_cast<std::size_t>(cfg.conv_filters);
    m.conv = zero_init
                 ? Conv2dParams<T>::zeros(kConvKernelT, kConvKernelF, 1, co, kConvStrideF)
                 : Conv2dParams<T>::init(kConvKernelT, kConvKernelF, 1, co, kConvStrideF, rng);
  }
  std::size_t in = static_cast<std::size_t>(cfg.rnn_input_dim());
  for (int l = 0; l < cfg.layers; ++l) {
    if (cfg.uses_lstm())
      m.lstm.push_back(zero_init ? LstmParams<T>::zeros(in, n) : LstmParams<T>::init(in, n, rng));
    else
      m.gru.push_back(zero_init ? GruParams<T>::zeros(in, n) : GruParams<T>::init(in, n, rng));
    in = n;
  }
  if (cfg.has_projection()) {
    const std::size_t p = static_cast<std::size_t>(kProjectionDim);
    m.proj = zero_init ? FcParams<T>::zeros(n, p) : FcParams<T>::init(n, p, rng);
  }
  const std::size_t d = static_cast<std::size_t>(cfg.head_input_dim());
  if (cfg.has_soft_attention()) {
    AttentionParams<T> att;
    att.fc = zero_init ? FcParams<T>::zeros(d, d) : FcParams<T>::init(d, d, rng);
    if (zero_init) {
      att.v = Tensor<T>({d});
    } else {
      Tensor<T> v = normalized_init<T>(d, 1, rng);
      v.reshape({d});
      att.v = std::move(v);
    }
    m.att = std::move(att);
  }
  if (cfg.is_attention())
    m.head = zero_init ? FcParams<T>::zeros(d, c) : FcParams<T>::init(d, c, rng);
  else
    m.head = zero_init ? FcParams<T>::zeros(cfg.has_projection() ? kProjectionDim : n, c)
                       : FcParams<T>::init(cfg.has_projection() ? kProjectionDim : n, c, rng);
  return m;
}

/// Zero-parameter clone used as a gradient accumulator.
template <typename T>
Model<T> zeros_like_model(const ModelConfig& cfg) {
  Rng unused(0);
  return build_model<T>(cfg, unused, /*zero_init=*/true);
}

// ---------------------------------------------------------------------------
// Encoder forward/backward over a whole feature sequence. Frames are fed
// one at a time through the same cell functions the streaming decoder
// uses, so both paths produce bit-identical states.

template <typename T>
struct EncoderCache {
  Tensor<T> feats;                           // T x F
  Tensor<T> conv_in;                         // T x F x 1 (crnn only)
  Tensor<T> conv_out;                        // T x F' x filters
  std::vector<std::vector<LstmCache<T>>> lstm;  // [layer][t]
  std::vector<std::vector<GruCache<T>>> gru;
  Tensor<T> rnn_out;  // T x nodes (input to the projection)
};

namespace detail {

template <typename T>
Tensor<T> row_view_copy(const Tensor<T>& m, std::size_t r) {
  Tensor<T> row({1, m.dim(1)});
  for (std::size_t c = 0; c < m.dim(1); ++c) row(0, c) = m(r, c);
  return row;
}

}  // namespace detail

template <typename T>
Tensor<T> encoder_forward(const Model<T>& m, const Tensor<T>& feats, EncoderCache<T>* cache) {
  if (feats.rank() != 2 || feats.dim(1) != static_cast<std::size_t>(m.cfg.feature_dim))
    throw Error(cat("encoder: expected T x ", m.cfg.feature_dim, " features"));
  const std::size_t t_len = feats.dim(0);
  Tensor<T> cur;
  if (m.cfg.uses_conv()) {
    Tensor<T> conv_in({t_len, feats.dim(1), 1});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t fi = 0; fi < feats.dim(1); ++fi) conv_in(t, fi, 0) = feats(t, fi);
    Tensor<T> conv_out = conv2d_forward(conv_in, *m.conv);
    cur = conv_out;
    cur.reshape({t_len, conv_out.dim(1) * conv_out.dim(2)});
    if (cache != nullptr) {
      cache->conv_in = std::move(conv_in);
      cache->conv_out = std::move(conv_out);
    }
  } else {
    cur = feats;
  }
  if (cache != nullptr) {
    cache->feats = feats;
    cache->lstm.assign(m.lstm.size(), {});
    cache->gru.assign(m.gru.size(), {});
  }
  const std::size_t n = static_cast<std::size_t>(m.cfg.nodes);
  for (std::size_t l = 0; l < m.lstm.size() + m.gru.size(); ++l) {
    Tensor<T> out({t_len, n});
    Tensor<T> h({1, n}), c({1, n});
    for (std::size_t t = 0; t < t_len; ++t) {
      const Tensor<T> x = detail::row_view_copy(cur, t);
      Tensor<T> h_next;
      if (!m.lstm.empty()) {
        Tensor<T> c_next;
        LstmCache<T> cc;
        lstm_cell_forward(x, h, c, m.lstm[l], h_next, c_next,
                          cache != nullptr ? &cc : nullptr);
        if (cache != nullptr) cache->lstm[l].push_back(std::move(cc));
        c = std::move(c_next);
      } else {
        GruCache<T> gc;
        gru_cell_forward(x, h, m.gru[l], h_next, cache != nullptr ? &gc : nullptr);
        if (cache != nullptr) cache->gru[l].push_back(std::move(gc));
      }
      h = std::move(h_next);
      for (std::size_t k = 0; k < n; ++k) out(t, k) = h(0, k);
    }
    cur = std::move(out);
  }
  if (cache != nullptr) cache->rnn_out = cur;
  if (m.proj) cur = fc_forward(cur, *m.proj);
  return cur;
}

/// Backpropagates through the encoder; accumulates parameter gradients
/// into `grads` and returns the gradient w.r.t. the input features.
template <typename T>
Tensor<T> encoder_backward(const Model<T>& m, const Tensor<T>& denc, const EncoderCache<T>& cache,
                           Model<T>& grads) {
  const std::size_t t_len = cache.feats.dim(0);
  const std::size_t n = static_cast<std::size_t>(m.cfg.nodes);
  Tensor<T> dcur =
      m.proj ? fc_backward(denc, cache.rnn_out, *m.proj, *grads.proj) : denc;
  const std::size_t num_layers = m.lstm.size() + m.gru.size();
  for (std::size_t li = num_layers; li-- > 0;) {
    const std::size_t in_dim = m.lstm.empty() ? m.gru[li].input_dim() : m.lstm[li].input_dim();
    Tensor<T> dprev({t_len, in_dim});
    Tensor<T> dh({1, n}), dc({1, n});
    for (std::size_t t = t_len; t-- > 0;) {
      Tensor<T> dh_in({1, n});
      for (std::size_t k = 0; k < n; ++k) dh_in(0, k) = dcur(t, k) + dh(0, k);
      Tensor<T> dx, dh_prev;
      if (!m.lstm.empty()) {
        Tensor<T> dc_prev;
        lstm_cell_backward(dh_in, dc, cache.lstm[li][t], m.lstm[li], grads.lstm[li], dx, dh_prev,
                           dc_prev);
        dc = std::move(dc_prev);
      } else {
        gru_cell_backward(dh_in, cache.gru[li][t], m.gru[li], grads.gru[li], dx, dh_prev);
      }
      dh = std::move(dh_prev);
      for (std::size_t k = 0; k < in_dim; ++k) dprev(t, k) = dx(0, k);
    }
    dcur = std::move(dprev);
  }
  if (m.cfg.uses_conv()) {
    Tensor<T> dconv_out = dcur;
    dconv_out.reshape({t_len, cache.conv_out.dim(1), cache.conv_out.dim(2)});
    const Tensor<T> dconv_in = conv2d_backward(dconv_out, cache.conv_in, *m.conv, *grads.conv);
    Tensor<T> dfeats({t_len, cache.feats.dim(1)});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t fi = 0; fi < cache.feats.dim(1); ++fi) dfeats(t, fi) = dconv_in(t, fi, 0);
    return dfeats;
  }
  return dcur;
}

// ---------------------------------------------------------------------------
// Attention pooling. The average variant runs the same weighted-sum code
// with all scores fixed at zero, so softmax yields exactly uniform
// weights and a zero-v soft model reduces to it bit for bit.

template <typename T>
struct AttentionCache {
  Tensor<T> enc;      // T x d
  Tensor<T> u;        // T x d, tanh(enc W + b); empty for average
  Tensor<T> alpha;    // T
  Tensor<T> context;  // 1 x d
};

/// softmax over a score vector, accumulating in chronological order.
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& e) {
  const std::size_t t_len = e.dim(0);
  Tensor<T> alpha({t_len});
  T mx = e[0];
  for (std::size_t t = 1; t < t_len; ++t) mx = std::max(mx, e[t]);
  T sum = T(0);
  for (std::size_t t = 0; t < t_len; ++t) {
    alpha[t] = std::exp(e[t] - mx);
    sum += alpha[t];
  }
  for (std::size_t t = 0; t < t_len; ++t) alpha[t] /= sum;
  return alpha;
}

template <typename T>
Tensor<T> attention_pool(const Model<T>& m, const Tensor<T>& enc, AttentionCache<T>* cache) {
  const std::size_t t_len = enc.dim(0), d = enc.dim(1);
  Tensor<T> e({t_len});
  Tensor<T> u;
  if (m.cfg.has_soft_attention()) {
    u = fc_forward(enc, m.att->fc);
    for (auto& v : u.values()) v = std::tanh(v);
    for (std::size_t t = 0; t < t_len; ++t) {
      T acc = T(0);
      for (std::size_t k = 0; k < d; ++k) acc += u(t, k) * m.att->v[k];
      e[t] = acc;
    }
  }
  const Tensor<T> alpha = attention_weights(e);
  Tensor<T> context({1, d});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t k = 0; k < d; ++k) context(0, k) += alpha[t] * enc(t, k);
  if (cache != nullptr) *cache = AttentionCache<T>{enc, std::move(u), alpha, context};
  return context;
}

template <typename T>
Tensor<T> attention_backward(const Model<T>& m, const Tensor<T>& dcontext,
                             const AttentionCache<T>& cache, Model<T>& grads) {
  const std::size_t t_len = cache.enc.dim(0), d = cache.enc.dim(1);
  Tensor<T> denc({t_len, d});
  Tensor<T> dalpha({t_len});
  for (std::size_t t = 0; t < t_len; ++t) {
    T acc = T(0);
    for (std::size_t k = 0; k < d; ++k) {
      acc += cache.enc(t, k) * dcontext(0, k);
      denc(t, k) = cache.alpha[t] * dcontext(0, k);
    }
    dalpha[t] = acc;
  }
  if (!m.cfg.has_soft_attention()) return denc;  // uniform weights carry no parameters
  // Softmax jacobian: de_t = alpha_t * (dalpha_t - sum_s alpha_s dalpha_s).
  T dot = T(0);
  for (std::size_t t = 0; t < t_len; ++t) dot += cache.alpha[t] * dalpha[t];
  Tensor<T> da({t_len, d});
  for (std::size_t t = 0; t < t_len; ++t) {
    const T de = cache.alpha[t] * (dalpha[t] - dot);
    for (std::size_t k = 0; k < d; ++k) {
      grads.att->v[k] += de * cache.u(t, k);
      const T du = de * m.att->v[k];
      da(t, k) = du * (T(1) - cache.u(t, k) * cache.u(t, k));
    }
  }
  add_inplace(denc, fc_backward(da, cache.enc, m.att->fc, grads.att->fc));
  return denc;
}

// ---------------------------------------------------------------------------
// Whole-clip scoring (attention architecture).

template <typename T>
struct ForwardCache {
  EncoderCache<T> enc;
  AttentionCache<T> att;
  Tensor<T> context;  // 1 x d
};

template <typename T>
Tensor<T> forward_logits(const Model<T>& m, const Tensor<T>& feats, ForwardCache<T>* cache) {
  if (!m.cfg.is_attention()) throw Error("forward_logits: attention architecture only");
  const Tensor<T> enc = encoder_forward(m, feats, cache != nullptr ? &cache->enc : nullptr);
  const Tensor<T> ctx = attention_pool(m, enc, cache != nullptr ? &cache->att : nullptr);
  if (cache != nullptr) cache->context = ctx;
  return fc_forward(ctx, m.head);
}

/// Probability assigned to the keyword class for a whole clip.
template <typename T>
T detect_score(const Model<T>& m, const Tensor<T>& feats) {
  Tensor<T> logits = forward_logits<T>(m, feats, nullptr);
  softmax_rows(logits);
  return logits(0, 1);
}

/// Forward + cross-entropy + full backward for one example. Returns the
/// loss; parameter gradients are accumulated into `grads`.
template <typename T>
T attention_loss_backward(const Model<T>& m, const Tensor<T>& feats, int label, Model<T>& grads) {
  ForwardCache<T> cache;
  const Tensor<T> logits = forward_logits(m, feats, &cache);
  Tensor<T> dlogits;
  const std::vector<int> labels = {label};
  const T loss = softmax_xent(logits, labels, &dlogits);
  const Tensor<T> dctx = fc_backward(dlogits, cache.context, m.head, grads.head);
  const Tensor<T> denc = attention_backward(m, dctx, cache.att, grads);
  encoder_backward(m, denc, cache.enc, grads);
  return loss;
}

// ---------------------------------------------------------------------------
// deep_kws posterior path.

/// Stacks context windows: row t is the concatenation of frames
/// [t - past, t + future], replicating the first/last frame at the edges.
template <typename T>
Tensor<T> dnn_context_rows(const Tensor<T>& feats, int past, int future) {
  const std::size_t t_len = feats.dim(0), f = feats.dim(1);
  const std::size_t width = static_cast<std::size_t>(past + 1 + future);
  Tensor<T> rows({t_len, width * f});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t w = 0; w < width; ++w) {
      long src = static_cast<long>(t) - past + static_cast<long>(w);
      src = std::max(0L, std::min(src, static_cast<long>(t_len) - 1));
      for (std::size_t k = 0; k < f; ++k)
        rows(t, w * f + k) = feats(static_cast<std::size_t>(src), k);
    }
  return rows;
}

template <typename T>
struct DeepKwsCache {
  Tensor<T> rows;                  // dnn input rows
  std::vector<Tensor<T>> pre;      // pre-activation per hidden layer
  std::vector<Tensor<T>> post;     // relu outputs
  EncoderCache<T> enc;             // recurrent variants
  Tensor<T> head_in;               // rows entering the output head
};

/// Per-frame class logits (T x num_classes).
template <typename T>
Tensor<T> deep_kws_logits(const Model<T>& m, const Tensor<T>& feats, DeepKwsCache<T>* cache) {
  if (m.cfg.is_attention()) throw Error("deep_kws_logits: deep_kws architecture only");
  Tensor<T> cur;
  if (m.cfg.uses_dnn()) {
    cur = dnn_context_rows(feats, m.cfg.context_past, m.cfg.context_future);
    if (cache != nullptr) cache->rows = cur;
    for (const auto& layer : m.dnn) {
      Tensor<T> pre = fc_forward(cur, layer);
      Tensor<T> post = relu_forward(pre);
      if (cache != nullptr) {
        cache->pre.push_back(pre);
        cache->post.push_back(post);
      }
      cur = std::move(post);
    }
  } else {
    cur = encoder_forward(m, feats, cache != nullptr ? &cache->enc : nullptr);
  }
  if (cache != nullptr) cache->head_in = cur;
  return fc_forward(cur, m.head);
}

/// Per-frame posteriors (softmax over classes).
template <typename T>
Tensor<T> deep_kws_posteriors(const Model<T>& m, const Tensor<T>& feats) {
  Tensor<T> logits = deep_kws_logits<T>(m, feats, nullptr);
  softmax_rows(logits);
  return logits;
}

/// Trailing-mean smoothing over up to `window` frames, summed forward in
/// time exactly as written: p'(t) = mean of p over [max(0, t-window+1), t].
template <typename T>
Tensor<T> smooth_posteriors(const Tensor<T>& post, int window) {
  if (window < 1) throw Error("smooth_posteriors: window must be >= 1");
  const std::size_t t_len = post.dim(0), c = post.dim(1);
  Tensor<T> out({t_len, c});
  for (std::size_t t = 0; t < t_len; ++t) {
    const std::size_t lo = t + 1 >= static_cast<std::size_t>(window)
                               ? t + 1 - static_cast<std::size_t>(window)
                               : 0;
    const T inv = T(1) / static_cast<T>(t - lo + 1);
    for (std::size_t k = 0; k < c; ++k) {
      T acc = T(0);
      for (std::size_t s = lo; s <= t; ++s) acc += post(s, k);
      out(t, k) = acc * inv;
    }
  }
  return out;
}

/// Per-frame confidence: the geometric mean over the keyword classes
/// (1..C-1) of each class's maximum smoothed posterior in a trailing
/// window of `max_window` frames.
template <typename T>
std::vector<T> deep_kws_confidence(const Tensor<T>& smoothed, int max_window) {
  if (max_window < 1) throw Error("deep_kws_confidence: window must be >= 1");
  const std::size_t t_len = smoothed.dim(0), c = smoothed.dim(1);
  if (c < 2) throw Error("deep_kws_confidence: need at least one keyword class");
  std::vector<T> conf(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    const std::size_t lo = t + 1 >= static_cast<std::size_t>(max_window)
                               ? t + 1 - static_cast<std::size_t>(max_window)
                               : 0;
    T prod = T(1);
    for (std::size_t k = 1; k < c; ++k) {
      T best = smoothed(lo, k);
      for (std::size_t s = lo + 1; s <= t; ++s) best = std::max(best, smoothed(s, k));
      prod *= best;
    }
    conf[t] = std::pow(prod, T(1) / static_cast<T>(c - 1));
  }
  return conf;
}

/// Per-frame cross-entropy training step for the deep_kws architecture.
template <typename T>
T deep_kws_loss_backward(const Model<T>& m, const Tensor<T>& feats,
                         std::span<const int> frame_labels, Model<T>& grads) {
  DeepKwsCache<T> cache;
  const Tensor<T> logits = deep_kws_logits(m, feats, &cache);
  Tensor<T> dlogits;
  const T loss = softmax_xent(logits, frame_labels, &dlogits);
  Tensor<T> dcur = fc_backward(dlogits, cache.head_in, m.head, grads.head);
  if (m.cfg.uses_dnn()) {
    for (std::size_t l = m.dnn.size(); l-- > 0;) {
      dcur = relu_backward(dcur, cache.pre[l]);
      const Tensor<T>& input = l == 0 ? cache.rows : cache.post[l - 1];
      dcur = fc_backward(dcur, input, m.dnn[l], grads.dnn[l]);
    }
  } else {
    encoder_backward(m, dcur, cache.enc, grads);
  }
  return loss;
}

}  // namespace kws

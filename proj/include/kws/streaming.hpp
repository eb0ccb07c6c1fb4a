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
//
// One-frame-per-step decoding. Every arithmetic loop here mirrors its
// batch counterpart in model.hpp operation for operation, so feeding a
// clip frame by frame reproduces the batch result bit for bit (the
// equivalence tests pin this).

#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kws/features.hpp"
#include "kws/model.hpp"
#include "kws/wav.hpp"

namespace kws {

namespace detail {

/// Fixed-capacity chronological buffer of float rows, addressed by the
/// absolute frame index. Rows older than `capacity` pushes are dropped.
class RowRing {
 public:
  RowRing() = default;
  RowRing(std::size_t capacity, std::size_t width)
      : capacity_(capacity), width_(width), data_(capacity * width, 0.0f) {}

  void push(std::span<const float> row) {
    if (row.size() != width_) throw Error("ring: row width mismatch");
    float* slot = data_.data() + (static_cast<std::size_t>(pushed_) % capacity_) * width_;
    std::copy(row.begin(), row.end(), slot);
    ++pushed_;
  }

  std::size_t size() const { return std::min<std::size_t>(static_cast<std::size_t>(pushed_), capacity_); }
  long first_index() const { return std::max<long>(0, pushed_ - static_cast<long>(capacity_)); }
  long last_index() const { return pushed_ - 1; }

  std::span<const float> row(long absolute) const {
    if (absolute < first_index() || absolute > last_index())
      throw Error(cat("ring: frame ", absolute, " is no longer buffered"));
    return {data_.data() + (static_cast<std::size_t>(absolute) % capacity_) * width_, width_};
  }

 private:
  std::size_t capacity_ = 0;
  std::size_t width_ = 0;
  long pushed_ = 0;
  std::vector<float> data_;
};

/// One causal convolution column (the conv2d_forward inner loops for a
/// single time step), flattened [f_out * out_ch] exactly like the
/// encoder's reshape. Inputs before frame 0 are zero padding.
inline TensorF conv_step(const Conv2dParams<float>& p, const RowRing& ring, long t,
                         std::size_t f_in) {
  const std::size_t f_out = conv_out_freq(f_in, p.stride_f);
  const int pad_l = conv_pad_left(f_in, p.kf(), p.stride_f);
  TensorF flat({1, f_out * p.out_ch()});
  for (std::size_t fo = 0; fo < f_out; ++fo)
    for (std::size_t co = 0; co < p.out_ch(); ++co) {
      float acc = p.b[co];
      for (std::size_t dt = 0; dt < p.kt(); ++dt) {
        const long ti = t - static_cast<long>(p.kt() - 1) + static_cast<long>(dt);
        if (ti < 0) continue;
        const std::span<const float> row = ring.row(ti);
        for (std::size_t df = 0; df < p.kf(); ++df) {
          const long fi = static_cast<long>(fo) * p.stride_f - pad_l + static_cast<long>(df);
          if (fi < 0 || fi >= static_cast<long>(f_in)) continue;
          acc += row[static_cast<std::size_t>(fi)] * p.w(dt, df, 0, co);
        }
      }
      flat(0, fo * p.out_ch() + co) = acc;
    }
  return flat;
}

}  // namespace detail

struct DetectEvent {
  long frame = 0;
  double time_s = 0;
  float score = 0;
};

/// Streams an attention model one frame at a time.
///
/// Recurrent state is carried forward indefinitely (one cell evaluation
/// per layer per frame); attention pools over a sliding window of the
/// most recent `cfg.max_window` encoder outputs, so every pushed frame
/// yields a score. Crossing `threshold` records a detection event, and
/// further events are suppressed for `refractory` frames.
///
/// The model must outlive the decoder.
class StreamingDecoder {
 public:
  explicit StreamingDecoder(const Model<float>& model, float threshold = 0.5f,
                            int refractory = 100, double frame_hop_s = 0.010)
      : model_(&model),
        threshold_(threshold),
        refractory_(refractory),
        hop_s_(frame_hop_s),
        window_(model.cfg.max_window) {
    if (!model.cfg.is_attention())
      throw Error("streaming: StreamingDecoder drives the attention architecture");
    if (refractory < 1) throw Error("streaming: refractory must be >= 1");
    if (window_ < 1) throw Error("streaming: scoring window must be >= 1");
    const std::size_t f = static_cast<std::size_t>(model.cfg.feature_dim);
    const std::size_t d = static_cast<std::size_t>(model.cfg.head_input_dim());
    if (model.cfg.uses_conv()) conv_ring_ = detail::RowRing(static_cast<std::size_t>(kConvKernelT), f);
    enc_ring_ = detail::RowRing(static_cast<std::size_t>(window_), d);
    e_ring_ = detail::RowRing(static_cast<std::size_t>(window_), 1);
    const std::size_t layers = static_cast<std::size_t>(model.cfg.layers);
    const std::size_t n = static_cast<std::size_t>(model.cfg.nodes);
    h_.assign(layers, TensorF({1, n}));
    if (model.cfg.uses_lstm()) c_.assign(layers, TensorF({1, n}));
    cell_evals_.assign(layers, 0);
  }

  /// Consumes one feature frame and returns the detection score over the
  /// trailing window.
  float push_frame(std::span<const float> row) {
    const ModelConfig& cfg = model_->cfg;
    if (row.size() != static_cast<std::size_t>(cfg.feature_dim))
      throw Error(cat("streaming: expected rows of ", cfg.feature_dim, " features"));
    const long t = frames_pushed_++;

    // Front of the encoder: raw features, or one causal conv column.
    TensorF x;
    if (cfg.uses_conv()) {
      conv_ring_.push(row);
      x = detail::conv_step(*model_->conv, conv_ring_, t,
                            static_cast<std::size_t>(cfg.feature_dim));
      ++conv_evals_;
    } else {
      x = TensorF({1, row.size()});
      for (std::size_t k = 0; k < row.size(); ++k) x(0, k) = row[k];
    }

    // Recurrent stack: one cell evaluation per layer, state carried over.
    for (std::size_t l = 0; l < h_.size(); ++l) {
      TensorF h_next;
      if (cfg.uses_lstm()) {
        TensorF c_next;
        lstm_cell_forward<float>(x, h_[l], c_[l], model_->lstm[l], h_next, c_next, nullptr);
        c_[l] = std::move(c_next);
      } else {
        gru_cell_forward<float>(x, h_[l], model_->gru[l], h_next, nullptr);
      }
      h_[l] = h_next;
      x = std::move(h_next);
      ++cell_evals_[l];
    }
    const TensorF enc_row = model_->proj ? fc_forward(x, *model_->proj) : x;

    // Attention score for this frame is fixed once the frame arrives, so
    // it is computed here and buffered alongside the encoder output.
    float e = 0.0f;
    if (cfg.has_soft_attention()) {
      TensorF u = fc_forward(enc_row, model_->att->fc);
      for (float& v : u.values()) v = std::tanh(v);
      float acc = 0.0f;
      for (std::size_t k = 0; k < u.dim(1); ++k) acc += u(0, k) * model_->att->v[k];
      e = acc;
    }
    enc_ring_.push(std::span<const float>(enc_row.values().data(), enc_row.numel()));
    e_ring_.push(std::span<const float>(&e, 1));

    const float score = window_score();
    if (score >= threshold_ &&
        (events_.empty() || t - events_.back().frame >= refractory_))
      events_.push_back({t, static_cast<double>(t) * hop_s_, score});
    return score;
  }

  long frames_pushed() const { return frames_pushed_; }
  std::size_t cell_evals(std::size_t layer) const { return cell_evals_.at(layer); }
  std::size_t conv_evals() const { return conv_evals_; }
  int window() const { return window_; }
  const std::vector<DetectEvent>& events() const { return events_; }

 private:
  /// Attention over the buffered window, chronological just like the
  /// batch attention_pool.
  float window_score() const {
    const std::size_t w = enc_ring_.size();
    const std::size_t d = static_cast<std::size_t>(model_->cfg.head_input_dim());
    const long lo = enc_ring_.first_index();
    TensorF e({w});
    for (std::size_t i = 0; i < w; ++i) e[i] = e_ring_.row(lo + static_cast<long>(i))[0];
    const TensorF alpha = attention_weights(e);
    TensorF context({1, d});
    for (std::size_t i = 0; i < w; ++i) {
      const std::span<const float> enc = enc_ring_.row(lo + static_cast<long>(i));
      for (std::size_t k = 0; k < d; ++k) context(0, k) += alpha[i] * enc[k];
    }
    TensorF logits = fc_forward(context, model_->head);
    softmax_rows(logits);
    return logits(0, 1);
  }

  const Model<float>* model_;
  float threshold_;
  int refractory_;
  double hop_s_;
  int window_;
  detail::RowRing conv_ring_;
  detail::RowRing enc_ring_;
  detail::RowRing e_ring_;
  std::vector<TensorF> h_, c_;
  std::vector<std::size_t> cell_evals_;
  std::size_t conv_evals_ = 0;
  long frames_pushed_ = 0;
  std::vector<DetectEvent> events_;
};

// ---------------------------------------------------------------------------
// Streaming posterior (deep_kws) pipeline.
// ---------------------------------------------------------------------------

struct PosteriorFrame {
  long frame = 0;
  float confidence = 0;
};

/// Streams a deep_kws model: per-frame posteriors, trailing-mean
/// smoothing, and the windowed geometric-mean confidence, all bit-equal
/// to the batch pipeline.
///
/// The dnn encoder looks `context_future` frames ahead, so its output
/// lags the input by that many frames; call flush() at the end of the
/// stream to emit the tail (replicating the final frame, as the batch
/// context stacking does). Recurrent encoders emit one confidence per
/// push with no latency.
class StreamingDeepKws {
 public:
  explicit StreamingDeepKws(const Model<float>& model) : model_(&model) {
    const ModelConfig& cfg = model.cfg;
    if (cfg.is_attention())
      throw Error("streaming: StreamingDeepKws drives the deep_kws architecture");
    const std::size_t f = static_cast<std::size_t>(cfg.feature_dim);
    if (cfg.uses_dnn()) {
      feat_ring_ = detail::RowRing(
          static_cast<std::size_t>(cfg.context_past + 1 + cfg.context_future), f);
    } else {
      const std::size_t layers = static_cast<std::size_t>(cfg.layers);
      const std::size_t n = static_cast<std::size_t>(cfg.nodes);
      h_.assign(layers, TensorF({1, n}));
      if (cfg.uses_lstm()) c_.assign(layers, TensorF({1, n}));
    }
    const std::size_t classes = static_cast<std::size_t>(cfg.num_classes);
    post_ring_ = detail::RowRing(static_cast<std::size_t>(cfg.smooth_frames), classes);
    smooth_ring_ = detail::RowRing(static_cast<std::size_t>(cfg.max_window), classes);
  }

  /// Consumes one feature frame; returns the confidence frames this push
  /// made computable (always one for recurrent encoders, zero or one for
  /// the dnn while it waits for future context).
  std::vector<PosteriorFrame> push_frame(std::span<const float> row) {
    const ModelConfig& cfg = model_->cfg;
    if (row.size() != static_cast<std::size_t>(cfg.feature_dim))
      throw Error(cat("streaming: expected rows of ", cfg.feature_dim, " features"));
    const long t = frames_pushed_++;
    std::vector<PosteriorFrame> out;
    if (cfg.uses_dnn()) {
      feat_ring_.push(row);
      while (emitted_ + cfg.context_future <= t) out.push_back(emit_dnn_frame());
    } else {
      out.push_back(emit_recurrent_frame(row, t));
    }
    return out;
  }

  /// Emits any frames still waiting for future context (dnn only).
  std::vector<PosteriorFrame> flush() {
    std::vector<PosteriorFrame> out;
    if (model_->cfg.uses_dnn())
      while (emitted_ < frames_pushed_) out.push_back(emit_dnn_frame());
    return out;
  }

  long frames_pushed() const { return frames_pushed_; }
  long frames_emitted() const { return emitted_; }

 private:
  PosteriorFrame emit_dnn_frame() {
    const ModelConfig& cfg = model_->cfg;
    const std::size_t f = static_cast<std::size_t>(cfg.feature_dim);
    const std::size_t width = static_cast<std::size_t>(cfg.context_past + 1 + cfg.context_future);
    const long k = emitted_;
    const long last = feat_ring_.last_index();
    TensorF ctx({1, width * f});
    for (std::size_t w = 0; w < width; ++w) {
      long src = k - cfg.context_past + static_cast<long>(w);
      src = std::max(0L, std::min(src, last));
      const std::span<const float> r = feat_ring_.row(src);
      for (std::size_t i = 0; i < f; ++i) ctx(0, w * f + i) = r[i];
    }
    TensorF cur = std::move(ctx);
    for (const FcParams<float>& layer : model_->dnn) cur = relu_forward(fc_forward(cur, layer));
    return score_head_row(cur, k);
  }

  PosteriorFrame emit_recurrent_frame(std::span<const float> row, long t) {
    TensorF x({1, row.size()});
    for (std::size_t k = 0; k < row.size(); ++k) x(0, k) = row[k];
    for (std::size_t l = 0; l < h_.size(); ++l) {
      TensorF h_next;
      if (model_->cfg.uses_lstm()) {
        TensorF c_next;
        lstm_cell_forward<float>(x, h_[l], c_[l], model_->lstm[l], h_next, c_next, nullptr);
        c_[l] = std::move(c_next);
      } else {
        gru_cell_forward<float>(x, h_[l], model_->gru[l], h_next, nullptr);
      }
      h_[l] = h_next;
      x = std::move(h_next);
    }
    if (model_->proj) x = fc_forward(x, *model_->proj);
    return score_head_row(x, t);
  }

  /// Head + softmax + smoothing + confidence for one emitted frame,
  /// mirroring smooth_posteriors and deep_kws_confidence.
  PosteriorFrame score_head_row(const TensorF& head_in, long k) {
    const std::size_t classes = static_cast<std::size_t>(model_->cfg.num_classes);
    TensorF post = fc_forward(head_in, model_->head);
    softmax_rows(post);
    post_ring_.push(std::span<const float>(post.values().data(), classes));

    TensorF smoothed({1, classes});
    const long plo = post_ring_.first_index();
    const float inv = 1.0f / static_cast<float>(post_ring_.last_index() - plo + 1);
    for (std::size_t c = 0; c < classes; ++c) {
      float acc = 0.0f;
      for (long s = plo; s <= post_ring_.last_index(); ++s) acc += post_ring_.row(s)[c];
      smoothed(0, c) = acc * inv;
    }
    smooth_ring_.push(std::span<const float>(smoothed.values().data(), classes));

    const long slo = smooth_ring_.first_index();
    float prod = 1.0f;
    for (std::size_t c = 1; c < classes; ++c) {
      float best = smooth_ring_.row(slo)[c];
      for (long s = slo + 1; s <= smooth_ring_.last_index(); ++s)
        best = std::max(best, smooth_ring_.row(s)[c]);
      prod *= best;
    }
    const float conf = std::pow(prod, 1.0f / static_cast<float>(classes - 1));
    ++emitted_;
    return {k, conf};
  }

  const Model<float>* model_;
  detail::RowRing feat_ring_;
  std::vector<TensorF> h_, c_;
  detail::RowRing post_ring_;
  detail::RowRing smooth_ring_;
  long frames_pushed_ = 0;
  long emitted_ = 0;
};

// ---------------------------------------------------------------------------
// File driver
// ---------------------------------------------------------------------------

struct StreamResult {
  long frames = 0;
  std::vector<DetectEvent> events;
};

/// Featurizes a WAV file and streams it through an attention model,
/// writing one "frame<TAB>time_s<TAB>score" row per frame.
inline StreamResult stream_file(const Model<float>& model, const std::string& wav_path,
                                std::ostream& os, float threshold = 0.5f,
                                const FeatureConfig& fcfg = {}, const PcenConfig& pcfg = {}) {
  const FeatureMatrix fm = featurize(read_wav(wav_path), fcfg, pcfg);
  StreamingDecoder decoder(model, threshold, /*refractory=*/model.cfg.max_window,
                           fm.frame_hop_s);
  for (std::size_t t = 0; t < fm.num_frames(); ++t) {
    const std::span<const float> row(fm.frames.values().data() + t * fm.channels(),
                                     fm.channels());
    const float score = decoder.push_frame(row);
    os << t << '\t' << fm.frame_time_s(t) << '\t' << score << '\n';
  }
  return {decoder.frames_pushed(), decoder.events()};
}

}  // namespace kws

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
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "kws/common.hpp"
#include "kws/tensor.hpp"
#include "kws/wav.hpp"

namespace kws {

/// Front-end configuration: 25 ms windows every 10 ms, 40 mel channels.
struct FeatureConfig {
  int sample_rate = 16000;
  double frame_len_s = 0.025;
  double frame_hop_s = 0.010;
  int n_mels = 40;
  double fmin_hz = 20.0;
  double fmax_hz = 0.0;  // 0 selects the Nyquist frequency
  int fft_size = 512;

  int frame_len() const { return static_cast<int>(std::lround(frame_len_s * sample_rate)); }
  int frame_hop() const { return static_cast<int>(std::lround(frame_hop_s * sample_rate)); }

  void validate() const {
    if (sample_rate <= 0) throw Error("features: sample_rate must be positive");
    if (frame_len() <= 0 || frame_hop() <= 0)
      throw Error("features: frame length and hop must be positive");
    if (n_mels <= 0) throw Error("features: n_mels must be positive");
    if ((fft_size & (fft_size - 1)) != 0 || fft_size <= 0)
      throw Error("features: fft_size must be a power of two");
    if (fft_size < frame_len())
      throw Error(cat("features: fft_size ", fft_size, " is shorter than the ", frame_len(),
                      "-sample analysis window"));
    // Each triangle needs at least the spacing of one FFT bin to have support.
    if (n_mels + 2 > fft_size / 2 + 1)
      throw Error(cat("features: ", n_mels, " mel channels exceed the resolution of a ", fft_size,
                      "-point FFT"));
    const double nyquist = sample_rate / 2.0;
    const double fmax = fmax_hz == 0.0 ? nyquist : fmax_hz;
    if (fmin_hz < 0.0 || fmax <= fmin_hz || fmax > nyquist)
      throw Error("features: require 0 <= fmin < fmax <= Nyquist");
  }
};

/// Per-channel energy normalization (smoother + root compression).
struct PcenConfig {
  double s = 0.025;
  double alpha = 0.98;
  double delta = 2.0;
  double r = 0.5;
  double eps = 1e-6;

  void validate() const {
    if (!(s > 0.0 && s <= 1.0)) throw Error("pcen: smoothing coefficient s must be in (0, 1]");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("pcen: alpha must be in (0, 1]");
    if (!(delta > 0.0)) throw Error("pcen: delta must be positive");
    if (!(r > 0.0 && r <= 1.0)) throw Error("pcen: root r must be in (0, 1]");
    if (!(eps > 0.0)) throw Error("pcen: eps must be positive");
  }
};

/// A feature stream: frames x channels, with the timing metadata needed to
/// convert frame indices back to seconds.
struct FeatureMatrix {
  TensorF frames;  // num_frames x channels
  double frame_len_s = 0.025;
  double frame_hop_s = 0.010;

  std::size_t num_frames() const { return frames.dim(0); }
  std::size_t channels() const { return frames.dim(1); }
  double frame_time_s(std::size_t t) const { return static_cast<double>(t) * frame_hop_s; }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace detail {

/// In-place iterative radix-2 FFT. The twiddle factors are evaluated in
/// double precision so the float result is stable across platforms.
inline void fft_radix2(std::vector<std::complex<float>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw Error("fft: size must be a nonzero power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<float> w(static_cast<float>(std::cos(ang * static_cast<double>(k))),
                                    static_cast<float>(std::sin(ang * static_cast<double>(k))));
        const std::complex<float> u = a[i + k];
        const std::complex<float> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

}  // namespace detail

/// One-sided power spectrum (fft_size/2 + 1 bins) of a windowed frame,
/// zero-padded to fft_size.
inline std::vector<float> power_spectrum(std::span<const float> frame, int fft_size) {
  if (static_cast<int>(frame.size()) > fft_size)
    throw Error("features: frame longer than fft_size");
  std::vector<std::complex<float>> buf(static_cast<std::size_t>(fft_size));
  for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = std::complex<float>(frame[i], 0.0f);
  detail::fft_radix2(buf);
  std::vector<float> power(static_cast<std::size_t>(fft_size / 2 + 1));
  for (std::size_t k = 0; k < power.size(); ++k)
    power[k] = buf[k].real() * buf[k].real() + buf[k].imag() * buf[k].imag();
  return power;
}

/// Slices a signal into overlapping frames and applies a periodic Hann
/// window. Frame t covers samples [t*hop, t*hop + len); the trailing
/// partial window is dropped, so num_frames = 1 + floor((L - len) / hop).
inline TensorF frame_signal(std::span<const float> samples, const FeatureConfig& cfg) {
  cfg.validate();
  const int len = cfg.frame_len();
  const int hop = cfg.frame_hop();
  if (static_cast<int>(samples.size()) < len)
    throw Error(cat("features: signal of ", samples.size(), " samples is shorter than one ", len,
                    "-sample window"));
  const std::size_t num_frames = 1 + (samples.size() - static_cast<std::size_t>(len)) /
                                         static_cast<std::size_t>(hop);
  std::vector<float> window(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i)
    window[i] = static_cast<float>(
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(len)));
  TensorF frames({num_frames, static_cast<std::size_t>(len)});
  for (std::size_t t = 0; t < num_frames; ++t) {
    const std::size_t start = t * static_cast<std::size_t>(hop);
    for (int i = 0; i < len; ++i)
      frames(t, static_cast<std::size_t>(i)) = samples[start + i] * window[i];
  }
  return frames;
}

/// Triangular mel filterbank with HTK-style band edges: n_mels + 2 points
/// equally spaced on the mel scale between fmin and fmax.
class MelFilterbank {
 public:
  explicit MelFilterbank(const FeatureConfig& cfg) : n_mels_(cfg.n_mels) {
    cfg.validate();
    const int bins = cfg.fft_size / 2 + 1;
    const double fmax = cfg.fmax_hz == 0.0 ? cfg.sample_rate / 2.0 : cfg.fmax_hz;
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(fmax);
    edges_hz_.resize(static_cast<std::size_t>(n_mels_) + 2);
    for (int m = 0; m < n_mels_ + 2; ++m)
      edges_hz_[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / static_cast<double>(n_mels_ + 1));
    weights_.assign(static_cast<std::size_t>(n_mels_) * bins, 0.0f);
    for (int m = 0; m < n_mels_; ++m) {
      const double left = edges_hz_[m], center = edges_hz_[m + 1], right = edges_hz_[m + 2];
      for (int k = 0; k < bins; ++k) {
        const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
        double w = 0.0;
        if (f > left && f < right)
          w = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
        weights_[static_cast<std::size_t>(m) * bins + k] = static_cast<float>(w);
      }
    }
    bins_ = bins;
  }

  int n_mels() const { return n_mels_; }
  /// Center frequency of channel m in Hz.
  double center_hz(int m) const { return edges_hz_[static_cast<std::size_t>(m) + 1]; }

  void apply(std::span<const float> power, std::span<float> out) const {
    if (static_cast<int>(power.size()) != bins_ || static_cast<int>(out.size()) != n_mels_)
      throw Error("mel: size mismatch in filterbank application");
    for (int m = 0; m < n_mels_; ++m) {
      float acc = 0.0f;
      const float* row = weights_.data() + static_cast<std::size_t>(m) * bins_;
      for (int k = 0; k < bins_; ++k) acc += row[k] * power[k];
      out[m] = acc;
    }
  }

 private:
  int n_mels_;
  int bins_ = 0;
  std::vector<double> edges_hz_;
  std::vector<float> weights_;
};

/// Mel-band energies for a batch of windowed frames (rows of
/// frame_signal output). Returns num_frames x n_mels.
inline TensorF mel_energies(const TensorF& frames, const FeatureConfig& cfg) {
  const MelFilterbank bank(cfg);
  TensorF out({frames.dim(0), static_cast<std::size_t>(cfg.n_mels)});
  for (std::size_t t = 0; t < frames.dim(0); ++t) {
    const auto power = power_spectrum(
        std::span<const float>(frames.data() + t * frames.dim(1), frames.dim(1)), cfg.fft_size);
    bank.apply(power, std::span<float>(out.data() + t * out.dim(1), out.dim(1)));
  }
  return out;
}

/// Running state of the normalizer's low-pass smoother. The first frame
/// seeds the smoother with its own energy, so a constant input is a fixed
/// point of the recurrence from the start.
struct PcenState {
  std::vector<double> m;
  bool started = false;

  explicit PcenState(std::size_t channels) : m(channels, 0.0) {}
};

/// Normalizes one frame of mel energies in place-order: out[c] =
/// (e[c] / (eps + m[c])^alpha + delta)^r - delta^r, with
/// m[c] <- (1-s)*m_prev[c] + s*e[c] (m seeded with e on the first frame).
inline void pcen_step(std::span<const float> energies, std::span<float> out, PcenState& state,
                      const PcenConfig& cfg) {
  if (energies.size() != state.m.size() || out.size() != state.m.size())
    throw Error("pcen: channel count mismatch");
  const double delta_r = std::pow(cfg.delta, cfg.r);
  for (std::size_t c = 0; c < energies.size(); ++c) {
    const double e = energies[c];
    if (!(e >= 0.0)) throw Error("pcen: energies must be non-negative and finite");
    state.m[c] = state.started ? (1.0 - cfg.s) * state.m[c] + cfg.s * e : e;
    const double norm = e / std::pow(cfg.eps + state.m[c], cfg.alpha);
    out[c] = static_cast<float>(std::pow(norm + cfg.delta, cfg.r) - delta_r);
  }
  state.started = true;
}

/// Batch normalization of a num_frames x channels energy matrix. Runs the
/// same per-frame recurrence as pcen_step so streaming and batch paths
/// produce identical output.
inline TensorF pcen(const TensorF& energies, const PcenConfig& cfg) {
  cfg.validate();
  TensorF out({energies.dim(0), energies.dim(1)});
  PcenState state(energies.dim(1));
  for (std::size_t t = 0; t < energies.dim(0); ++t) {
    pcen_step(std::span<const float>(energies.data() + t * energies.dim(1), energies.dim(1)),
              std::span<float>(out.data() + t * out.dim(1), out.dim(1)), state, cfg);
  }
  return out;
}

/// Full front end: framing, FFT power spectrum, mel filterbank, PCEN.
/// The clip's sample rate must match the configuration; no resampling.
inline FeatureMatrix featurize(const AudioClip& clip, const FeatureConfig& fcfg = {},
                               const PcenConfig& pcfg = {}) {
  fcfg.validate();
  pcfg.validate();
  if (clip.sample_rate != fcfg.sample_rate)
    throw Error(cat("features: clip sample rate ", clip.sample_rate, " != configured rate ",
                    fcfg.sample_rate, " (resampling is not supported)"));
  FeatureMatrix fm;
  fm.frame_len_s = fcfg.frame_len_s;
  fm.frame_hop_s = fcfg.frame_hop_s;
  fm.frames = pcen(mel_energies(frame_signal(clip.samples, fcfg), fcfg), pcfg);
  require_finite(fm.frames, "features");
  return fm;
}

// ---------------------------------------------------------------------------
// Feature file format: magic "KWSF", u32 version, u32 num_frames,
// u32 channels, then num_frames*channels float32 values, row-major,
// all little-endian.

inline constexpr std::uint32_t kFeatureFileVersion = 1;

inline void write_features(const std::string& path, const FeatureMatrix& fm) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(cat("features: cannot write '", path, "'"));
  os.write("KWSF", 4);
  io::write_u32(os, kFeatureFileVersion);
  io::write_u32(os, static_cast<std::uint32_t>(fm.num_frames()));
  io::write_u32(os, static_cast<std::uint32_t>(fm.channels()));
  io::write_f32_array(os, fm.frames.data(), fm.frames.numel());
  if (!os) throw Error(cat("features: failed writing '", path, "'"));
}

inline FeatureMatrix read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(cat("features: cannot open '", path, "'"));
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "KWSF")
    throw Error(cat("features: '", path, "' is not a feature file (bad magic)"));
  const std::uint32_t version = io::read_u32(is);
  if (version != kFeatureFileVersion)
    throw Error(cat("features: '", path, "' has unsupported version ", version));
  const std::uint32_t num_frames = io::read_u32(is);
  const std::uint32_t channels = io::read_u32(is);
  if (num_frames == 0 || channels == 0)
    throw Error(cat("features: '", path, "' declares an empty matrix"));
  FeatureMatrix fm;
  fm.frames = TensorF({num_frames, channels});
  io::read_f32_array(is, fm.frames.data(), fm.frames.numel());
  if (!is) throw Error(cat("features: '", path, "' payload truncated"));
  return fm;
}

}  // namespace kws

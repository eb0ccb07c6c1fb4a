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
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "kws/streaming.hpp"
#include "kws/training.hpp"

namespace kws {

/// Per-clip detection scores for a labelled dataset, with the amount of
/// negative audio needed to express false alarms per hour.
struct EvalScores {
  std::vector<float> positives;
  std::vector<float> negatives;
  double negative_hours = 0;
};

/// Maximum streaming score over one clip, using a fresh decoder (no state
/// leaks between clips). Attention models score with the sliding-window
/// detector; deep_kws models with the smoothed-confidence pipeline.
inline float clip_score(const Model<float>& model, const TensorF& feats) {
  float best = 0.0f;
  const std::size_t t_len = feats.dim(0), f = feats.dim(1);
  const auto row = [&](std::size_t t) {
    return std::span<const float>(feats.values().data() + t * f, f);
  };
  if (model.cfg.is_attention()) {
    StreamingDecoder decoder(model, /*threshold=*/2.0f);  // never fires
    for (std::size_t t = 0; t < t_len; ++t) best = std::max(best, decoder.push_frame(row(t)));
    return best;
  }
  StreamingDeepKws decoder(model);
  const auto fold = [&best](const std::vector<PosteriorFrame>& frames) {
    for (const PosteriorFrame& p : frames) best = std::max(best, p.confidence);
  };
  for (std::size_t t = 0; t < t_len; ++t) fold(decoder.push_frame(row(t)));
  fold(decoder.flush());
  return best;
}

/// Worker count for dataset scoring: the KWS_NUM_WORKERS environment
/// variable, else 1. Results are identical for any worker count because
/// clips are scored independently and stored by index.
inline int eval_num_workers() {
  const char* env = std::getenv("KWS_NUM_WORKERS");
  if (env == nullptr) return 1;
  const int v = std::atoi(env);
  return v >= 1 ? v : 1;
}

inline EvalScores score_dataset(const Model<float>& model, const Dataset& ds,
                                double frame_hop_s = 0.010) {
  std::vector<float> scores(ds.examples.size());
  const int workers = std::min(
      eval_num_workers(), static_cast<int>(std::max<std::size_t>(scores.size(), 1)));
  const auto run = [&](int w) {
    for (std::size_t i = static_cast<std::size_t>(w); i < scores.size();
         i += static_cast<std::size_t>(workers))
      scores[i] = clip_score(model, ds.examples[i].feats);
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (std::thread& th : pool) th.join();
  }
  EvalScores out;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    if (ds.examples[i].label > 0) {
      out.positives.push_back(scores[i]);
    } else {
      out.negatives.push_back(scores[i]);
      out.negative_hours +=
          static_cast<double>(ds.examples[i].feats.dim(0)) * frame_hop_s / 3600.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detection-error tradeoff
// ---------------------------------------------------------------------------

struct RocPoint {
  double threshold = 0;
  double frr = 0;          // fraction of positives scoring below threshold
  double fa_per_hour = 0;  // negatives at/above threshold per hour of audio
};

/// Sweeps every distinct score (plus the 0 and 1 sentinels) as a
/// threshold and returns the curve in ascending threshold order. A clip
/// fires when its score is >= the threshold.
inline std::vector<RocPoint> roc_curve(const EvalScores& s) {
  if (s.positives.empty()) throw Error("roc: no positive clips");
  if (s.negatives.empty() || !(s.negative_hours > 0))
    throw Error("roc: no negative audio");
  std::vector<double> thresholds{0.0, 1.0};
  for (const float v : s.positives) thresholds.push_back(static_cast<double>(v));
  for (const float v : s.negatives) thresholds.push_back(static_cast<double>(v));
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<double> pos(s.positives.begin(), s.positives.end());
  std::vector<double> neg(s.negatives.begin(), s.negatives.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<RocPoint> curve;
  curve.reserve(thresholds.size());
  for (const double th : thresholds) {
    const auto below = static_cast<double>(
        std::lower_bound(pos.begin(), pos.end(), th) - pos.begin());
    const auto firing = static_cast<double>(
        neg.end() - std::lower_bound(neg.begin(), neg.end(), th));
    curve.push_back({th, below / static_cast<double>(pos.size()), firing / s.negative_hours});
  }
  return curve;
}

/// The lowest FRR among operating points whose false-alarm rate is within
/// `max_fa_per_hour`. If no point qualifies, the strictest threshold's
/// FRR is returned and a warning is written to `warn`.
inline double frr_at_fa(const std::vector<RocPoint>& curve, double max_fa_per_hour,
                        std::ostream* warn = nullptr) {
  if (curve.empty()) throw Error("frr_at_fa: empty curve");
  double best = -1.0;
  for (const RocPoint& p : curve)
    if (p.fa_per_hour <= max_fa_per_hour && (best < 0 || p.frr < best)) best = p.frr;
  if (best >= 0) return best;
  if (warn != nullptr)
    *warn << "no operating point reaches " << max_fa_per_hour
          << " false alarms per hour; reporting the strictest threshold\n";
  return curve.back().frr;  // ascending thresholds: last point has the fewest alarms
}

inline void write_roc_csv(const std::string& path, const std::vector<RocPoint>& curve) {
  std::ofstream os(path);
  if (!os) throw Error(cat("roc: cannot open '", path, "' for writing"));
  os << "threshold,frr,fa_per_hour\n";
  for (const RocPoint& p : curve)
    os << p.threshold << ',' << p.frr << ',' << p.fa_per_hour << '\n';
  if (!os) throw Error(cat("roc: failed writing '", path, "'"));
}

/// Minimal standalone SVG: FRR (0..1, up) against FA/hour (0..fa_max).
inline void write_roc_svg(const std::string& path, const std::vector<RocPoint>& curve,
                          double fa_max = 20.0) {
  if (!(fa_max > 0)) throw Error("roc: fa_max must be > 0");
  std::ofstream os(path);
  if (!os) throw Error(cat("roc: cannot open '", path, "' for writing"));
  const double w = 640, h = 480, m = 60;
  const auto x = [&](double fa) { return m + (w - 2 * m) * std::min(fa, fa_max) / fa_max; };
  const auto y = [&](double frr) { return h - m - (h - 2 * m) * std::min(frr, 1.0); };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
     << "  <rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n"
     << "  <line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m
     << "\" stroke=\"black\"/>\n"
     << "  <line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m
     << "\" stroke=\"black\"/>\n"
     << "  <text x=\"" << w / 2 << "\" y=\"" << h - m / 3
     << "\" text-anchor=\"middle\">false alarms per hour</text>\n"
     << "  <text x=\"" << m / 3 << "\" y=\"" << h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 "
     << m / 3 << " " << h / 2 << ")\">false reject rate</text>\n"
     << "  <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const RocPoint& p : curve) os << x(p.fa_per_hour) << ',' << y(p.frr) << ' ';
  os << "\"/>\n</svg>\n";
  if (!os) throw Error(cat("roc: failed writing '", path, "'"));
}

}  // namespace kws

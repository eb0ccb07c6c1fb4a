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
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "kws/features.hpp"
#include "kws/manifest.hpp"
#include "kws/model.hpp"
#include "kws/optim.hpp"
#include "kws/wav.hpp"

namespace kws {

/// A clip loaded into memory: features plus its manifest metadata.
struct Example {
  TensorF feats;  // T x feature_dim
  int label = 0;
  std::optional<std::pair<long, long>> span;
  std::vector<std::pair<long, long>> alignments;
  std::string path;
};

struct Dataset {
  std::vector<Example> examples;
  std::vector<std::size_t> positives;  // indices with label > 0
  std::vector<std::size_t> negatives;  // indices with label == 0
  double total_frames = 0;             // across all examples
};

/// Loads features from either a feature file (KWSF) or a WAV file, telling
/// them apart by the leading four magic bytes.
inline TensorF load_example_features(const std::string& path, const FeatureConfig& fcfg = {},
                                     const PcenConfig& pcfg = {}) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Error(cat("dataset: cannot open '", path, "'"));
  char magic[4] = {};
  probe.read(magic, 4);
  if (probe.gcount() != 4) throw Error(cat("dataset: '", path, "' is too short"));
  probe.close();
  if (std::string_view(magic, 4) == "KWSF") return read_features(path).frames;
  if (std::string_view(magic, 4) == "RIFF") return featurize(read_wav(path), fcfg, pcfg).frames;
  throw Error(cat("dataset: '", path, "' is neither a feature file nor a WAV file"));
}

/// Resolves a manifest entry path relative to the manifest's directory.
inline std::string resolve_manifest_path(const std::string& manifest_path,
                                         const std::string& entry_path) {
  const std::filesystem::path p(entry_path);
  if (p.is_absolute()) return entry_path;
  return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

inline Dataset load_dataset(const std::string& manifest_path, const FeatureConfig& fcfg = {},
                            const PcenConfig& pcfg = {}, std::ostream* warnings = nullptr) {
  Dataset ds;
  for (const ManifestEntry& entry : read_manifest(manifest_path, warnings)) {
    Example ex;
    ex.feats = load_example_features(resolve_manifest_path(manifest_path, entry.path), fcfg, pcfg);
    ex.label = entry.label;
    ex.span = entry.span;
    ex.alignments = entry.alignments;
    ex.path = entry.path;
    const long t_len = static_cast<long>(ex.feats.dim(0));
    if (ex.span && ex.span->second > t_len)
      throw Error(cat("dataset: '", entry.path, "' span end ", ex.span->second, " exceeds ", t_len,
                      " frames"));
    ds.total_frames += static_cast<double>(t_len);
    (ex.label > 0 ? ds.positives : ds.negatives).push_back(ds.examples.size());
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Cropping
// ---------------------------------------------------------------------------

/// Chooses the first frame of a fixed-length training crop.
///
/// For spanned (keyword) clips the start is drawn uniformly from the range
/// that keeps the whole span inside the crop: [max(0, span_end - crop),
/// min(span_start, T - crop)]. When that range is empty — the span is longer
/// than the crop — the crop is centred on the span and clamped to the clip.
/// Unspanned clips draw uniformly over all valid starts. Passing a null RNG
/// selects the deterministic evaluation policy: the midpoint of the valid
/// range for spanned clips, frame 0 otherwise.
inline long crop_start(long num_frames, int crop_frames,
                       const std::optional<std::pair<long, long>>& span, Rng* rng) {
  if (crop_frames < 1) throw Error("crop_start: crop_frames must be >= 1");
  const long max_start = std::max<long>(0, num_frames - crop_frames);
  if (span) {
    const long lo = std::max<long>(0, span->second - crop_frames);
    const long hi = std::min<long>(span->first, max_start);
    if (lo <= hi) {
      if (rng == nullptr) return lo + (hi - lo) / 2;
      return lo + static_cast<long>(rng->uniform_index(static_cast<std::size_t>(hi - lo + 1)));
    }
    const long centered = (span->first + span->second) / 2 - crop_frames / 2;
    return std::clamp<long>(centered, 0, max_start);
  }
  if (rng == nullptr) return 0;
  return static_cast<long>(rng->uniform_index(static_cast<std::size_t>(max_start + 1)));
}

/// Copies `crop_frames` rows starting at `start`; rows past the end of the
/// clip are zero (short clips are padded rather than stretched).
inline TensorF crop_features(const TensorF& feats, long start, int crop_frames) {
  const long t_len = static_cast<long>(feats.dim(0));
  const std::size_t c = feats.dim(1);
  if (start < 0 || start > t_len) throw Error(cat("crop_features: start ", start, " out of range"));
  TensorF out({static_cast<std::size_t>(crop_frames), c});
  const long stop = std::min<long>(t_len, start + crop_frames);
  for (long t = start; t < stop; ++t)
    for (std::size_t k = 0; k < c; ++k)
      out(static_cast<std::size_t>(t - start), k) = feats(static_cast<std::size_t>(t), k);
  return out;
}

/// Frame-level class targets for posterior models, relative to a crop.
/// Alignment span i maps to class i + 1; uncovered frames are filler (0).
/// A spanned clip without alignments treats the whole span as class 1.
inline std::vector<int> frame_labels(const Example& ex, long start, int crop_frames,
                                     int num_classes) {
  std::vector<int> labels(static_cast<std::size_t>(crop_frames), 0);
  std::vector<std::pair<long, long>> spans = ex.alignments;
  if (spans.empty() && ex.span && ex.label > 0) spans.push_back(*ex.span);
  if (static_cast<long>(spans.size()) > num_classes - 1)
    throw Error(cat("frame_labels: ", spans.size(), " alignment spans but only ", num_classes - 1,
                    " non-filler classes"));
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const long lo = std::max<long>(spans[i].first, start);
    const long hi = std::min<long>(spans[i].second, start + crop_frames);
    for (long t = lo; t < hi; ++t) labels[static_cast<std::size_t>(t - start)] = static_cast<int>(i) + 1;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  long steps = 1000;
  int batch_pos = 16;       // keyword examples per step
  int batch_neg = 16;       // non-keyword examples per step
  int crop_frames = 189;
  double lr = 1e-3;
  double lr_min = 1e-4;
  double lr_decay = 0.1;    // multiplier applied on a validation plateau
  int plateau_patience = 3; // evaluations without improvement before decay
  double clip_norm = 1.0;
  double l2 = 1e-5;
  long eval_every = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (steps < 1) throw Error("train: steps must be >= 1");
    if (batch_pos < 0 || batch_neg < 0 || batch_pos + batch_neg == 0)
      throw Error("train: batch must contain at least one example");
    if (crop_frames < 1) throw Error("train: crop_frames must be >= 1");
    if (!(lr > 0) || !(lr_min > 0) || lr_min > lr) throw Error("train: need lr >= lr_min > 0");
    if (!(lr_decay > 0) || lr_decay >= 1) throw Error("train: lr_decay must be in (0, 1)");
    if (plateau_patience < 1) throw Error("train: plateau_patience must be >= 1");
    if (!(clip_norm > 0)) throw Error("train: clip_norm must be > 0");
    if (l2 < 0) throw Error("train: l2 must be >= 0");
    if (eval_every < 1) throw Error("train: eval_every must be >= 1");
  }
};

struct MetricsRow {
  long step = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
  double grad_norm = 0;
};

struct TrainResult {
  Model<float> model;  // parameters with the best validation loss
  double best_val_loss = std::numeric_limits<double>::infinity();
  long best_step = 0;
  std::vector<MetricsRow> metrics;
};

/// Forward-only loss for one example under the deterministic crop policy.
inline double example_loss(const Model<float>& m, const Example& ex, int crop_frames) {
  const long start = crop_start(static_cast<long>(ex.feats.dim(0)), crop_frames, ex.span, nullptr);
  const TensorF crop = crop_features(ex.feats, start, crop_frames);
  if (m.cfg.is_attention()) {
    TensorF logits = forward_logits<float>(m, crop, nullptr);
    const int label = ex.label > 0 ? 1 : 0;
    return softmax_xent<float>(logits, std::span<const int>(&label, 1), nullptr);
  }
  TensorF logits = deep_kws_logits<float>(m, crop, nullptr);
  const std::vector<int> labels = frame_labels(ex, start, crop_frames, m.cfg.num_classes);
  return softmax_xent<float>(logits, std::span<const int>(labels), nullptr);
}

/// Mean forward-only loss over a dataset (deterministic crops).
inline double dataset_loss(const Model<float>& m, const Dataset& ds, int crop_frames) {
  if (ds.examples.empty()) throw Error("dataset_loss: empty dataset");
  double total = 0;
  for (const Example& ex : ds.examples) total += example_loss(m, ex, crop_frames);
  return total / static_cast<double>(ds.examples.size());
}

namespace detail {

/// Loss + gradient accumulation for one randomly cropped example.
inline double train_example(const Model<float>& m, const Example& ex, int crop_frames, Rng& rng,
                            Model<float>& grads) {
  const long start = crop_start(static_cast<long>(ex.feats.dim(0)), crop_frames, ex.span, &rng);
  const TensorF crop = crop_features(ex.feats, start, crop_frames);
  if (m.cfg.is_attention())
    return attention_loss_backward(m, crop, ex.label > 0 ? 1 : 0, grads);
  const std::vector<int> labels = frame_labels(ex, start, crop_frames, m.cfg.num_classes);
  return deep_kws_loss_backward(m, crop, std::span<const int>(labels), grads);
}

}  // namespace detail

/// Trains a model with Adam on balanced keyword/background batches.
///
/// Each step draws `batch_pos` spanned and `batch_neg` unspanned examples
/// (with replacement), averages their gradients, adds the L2 term
/// explicitly, clips the global gradient norm, and applies one Adam update.
/// Validation runs every `eval_every` steps; when it fails to improve for
/// `plateau_patience` consecutive evaluations the learning rate is decayed
/// (never below `lr_min`), and the best-validation parameters are kept.
inline TrainResult train_model(const ModelConfig& mcfg, const TrainConfig& tcfg,
                               const Dataset& train, const Dataset& val,
                               std::ostream* log = nullptr) {
  mcfg.validate();
  tcfg.validate();
  if (tcfg.batch_pos > 0 && train.positives.empty())
    throw Error("train: batch_pos > 0 but the training set has no positives");
  if (tcfg.batch_neg > 0 && train.negatives.empty())
    throw Error("train: batch_neg > 0 but the training set has no negatives");
  if (val.examples.empty()) throw Error("train: empty validation set");

  Rng rng(tcfg.seed);
  Model<float> model = build_model<float>(mcfg, rng);
  Model<float> grads = zeros_like_model<float>(mcfg);
  const std::vector<TensorF*> params = model.tensors();
  const std::vector<TensorF*> gptrs = grads.tensors();
  const std::vector<const TensorF*> gread(gptrs.begin(), gptrs.end());
  AdamState<float> adam = AdamState<float>::zeros_like(params);

  TrainResult result;
  result.model = model;
  double lr = tcfg.lr;
  int evals_since_improvement = 0;
  const int batch = tcfg.batch_pos + tcfg.batch_neg;

  for (long step = 1; step <= tcfg.steps; ++step) {
    for (TensorF* g : gptrs) g->fill(0);
    double loss_sum = 0;
    for (int b = 0; b < tcfg.batch_pos; ++b) {
      const Example& ex = train.examples[train.positives[rng.uniform_index(train.positives.size())]];
      loss_sum += detail::train_example(model, ex, tcfg.crop_frames, rng, grads);
    }
    for (int b = 0; b < tcfg.batch_neg; ++b) {
      const Example& ex = train.examples[train.negatives[rng.uniform_index(train.negatives.size())]];
      loss_sum += detail::train_example(model, ex, tcfg.crop_frames, rng, grads);
    }
    const double train_loss = loss_sum / batch;
    const float inv_batch = 1.0f / static_cast<float>(batch);
    for (TensorF* g : gptrs)
      for (float& v : g->values()) v *= inv_batch;
    if (tcfg.l2 > 0) {
      const float l2 = static_cast<float>(tcfg.l2);
      for (std::size_t i = 0; i < gptrs.size(); ++i) {
        std::span<const float> p = params[i]->values();
        std::span<float> g = gptrs[i]->values();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += l2 * p[k];
      }
    }
    const double grad_norm = clip_global_norm(gptrs, tcfg.clip_norm);
    adam_step(params, gread, adam, lr, /*l2=*/0.0);

    if (step % tcfg.eval_every == 0 || step == tcfg.steps) {
      const double val_loss = dataset_loss(model, val, tcfg.crop_frames);
      result.metrics.push_back({step, train_loss, val_loss, lr, grad_norm});
      if (log != nullptr)
        *log << "step " << step << " train_loss " << train_loss << " val_loss " << val_loss
             << " lr " << lr << " grad_norm " << grad_norm << "\n";
      if (val_loss < result.best_val_loss) {
        result.best_val_loss = val_loss;
        result.best_step = step;
        result.model = model;
        evals_since_improvement = 0;
      } else if (++evals_since_improvement >= tcfg.plateau_patience && lr > tcfg.lr_min) {
        lr = std::max(lr * tcfg.lr_decay, tcfg.lr_min);
        evals_since_improvement = 0;
        if (log != nullptr) *log << "plateau: lr -> " << lr << "\n";
      }
    }
  }
  return result;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path);
  if (!os) throw Error(cat("metrics: cannot open '", path, "' for writing"));
  os << "step,train_loss,val_loss,lr,grad_norm\n";
  for (const MetricsRow& r : rows)
    os << r.step << ',' << r.train_loss << ',' << r.val_loss << ',' << r.lr << ',' << r.grad_norm
       << '\n';
  if (!os) throw Error(cat("metrics: failed writing '", path, "'"));
}

}  // namespace kws

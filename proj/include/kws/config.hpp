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

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "kws/features.hpp"
#include "kws/model.hpp"
#include "kws/training.hpp"

namespace kws {

inline constexpr int kRunConfigVersion = 1;

namespace detail {

inline long config_long(const std::string& key, const std::string& val) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(val, &pos);
    if (pos != val.size()) throw std::invalid_argument(val);
    return v;
  } catch (const std::exception&) {
    throw Error(cat("config: bad value for '", key, "': '", val, "'"));
  }
}

inline double config_double(const std::string& key, const std::string& val) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(val, &pos);
    if (pos != val.size()) throw std::invalid_argument(val);
    return v;
  } catch (const std::exception&) {
    throw Error(cat("config: bad value for '", key, "': '", val, "'"));
  }
}

}  // namespace detail

/// Everything one run needs, parsed from a flat key=value file. Keys are
/// namespaced by component ("model.encoder", "train.lr", "features.n_mels",
/// "pcen.alpha") plus a bare "version". Unknown keys and malformed values
/// are rejected; '#' starts a comment.
struct RunConfig {
  int version = kRunConfigVersion;
  ModelConfig model;
  TrainConfig train;
  FeatureConfig features;
  PcenConfig pcen;

  void validate() const {
    if (version != kRunConfigVersion)
      throw Error(cat("config: unsupported version ", version, " (expected ",
                      kRunConfigVersion, ")"));
    model.validate();
    train.validate();
    features.validate();
    pcen.validate();
  }

  /// The effective configuration, in a form from_text() accepts.
  std::string to_text() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "version=" << version << "\n";
    std::istringstream model_record(model.to_record());
    std::string line;
    while (std::getline(model_record, line))
      if (!line.empty()) os << "model." << line << "\n";
    os << "train.steps=" << train.steps << "\n"
       << "train.batch_pos=" << train.batch_pos << "\n"
       << "train.batch_neg=" << train.batch_neg << "\n"
       << "train.crop_frames=" << train.crop_frames << "\n"
       << "train.lr=" << train.lr << "\n"
       << "train.lr_min=" << train.lr_min << "\n"
       << "train.lr_decay=" << train.lr_decay << "\n"
       << "train.plateau_patience=" << train.plateau_patience << "\n"
       << "train.clip_norm=" << train.clip_norm << "\n"
       << "train.l2=" << train.l2 << "\n"
       << "train.eval_every=" << train.eval_every << "\n"
       << "train.seed=" << train.seed << "\n";
    os << "features.sample_rate=" << features.sample_rate << "\n"
       << "features.frame_len_s=" << features.frame_len_s << "\n"
       << "features.frame_hop_s=" << features.frame_hop_s << "\n"
       << "features.n_mels=" << features.n_mels << "\n"
       << "features.fmin_hz=" << features.fmin_hz << "\n"
       << "features.fmax_hz=" << features.fmax_hz << "\n"
       << "features.fft_size=" << features.fft_size << "\n";
    os << "pcen.s=" << pcen.s << "\n"
       << "pcen.alpha=" << pcen.alpha << "\n"
       << "pcen.delta=" << pcen.delta << "\n"
       << "pcen.r=" << pcen.r << "\n"
       << "pcen.eps=" << pcen.eps << "\n";
    return os.str();
  }

  static RunConfig from_text(const std::string& text) {
    RunConfig cfg;
    std::string model_record;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(cat("config line ", line_no, ": expected key=value, got '", line, "'"));
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "version") {
        cfg.version = static_cast<int>(detail::config_long(key, val));
        if (cfg.version != kRunConfigVersion)
          throw Error(cat("config: unsupported version ", cfg.version, " (expected ",
                          kRunConfigVersion, ")"));
      } else if (key.rfind("model.", 0) == 0) {
        model_record += key.substr(6) + "=" + val + "\n";  // validated in bulk below
      } else if (key.rfind("train.", 0) == 0) {
        const std::string k = key.substr(6);
        TrainConfig& t = cfg.train;
        if (k == "steps") t.steps = detail::config_long(key, val);
        else if (k == "batch_pos") t.batch_pos = static_cast<int>(detail::config_long(key, val));
        else if (k == "batch_neg") t.batch_neg = static_cast<int>(detail::config_long(key, val));
        else if (k == "crop_frames") t.crop_frames = static_cast<int>(detail::config_long(key, val));
        else if (k == "lr") t.lr = detail::config_double(key, val);
        else if (k == "lr_min") t.lr_min = detail::config_double(key, val);
        else if (k == "lr_decay") t.lr_decay = detail::config_double(key, val);
        else if (k == "plateau_patience")
          t.plateau_patience = static_cast<int>(detail::config_long(key, val));
        else if (k == "clip_norm") t.clip_norm = detail::config_double(key, val);
        else if (k == "l2") t.l2 = detail::config_double(key, val);
        else if (k == "eval_every") t.eval_every = detail::config_long(key, val);
        else if (k == "seed")
          t.seed = static_cast<std::uint64_t>(detail::config_long(key, val));
        else throw Error(cat("config: unknown key '", key, "'"));
      } else if (key.rfind("features.", 0) == 0) {
        const std::string k = key.substr(9);
        FeatureConfig& f = cfg.features;
        if (k == "sample_rate") f.sample_rate = static_cast<int>(detail::config_long(key, val));
        else if (k == "frame_len_s") f.frame_len_s = detail::config_double(key, val);
        else if (k == "frame_hop_s") f.frame_hop_s = detail::config_double(key, val);
        else if (k == "n_mels") f.n_mels = static_cast<int>(detail::config_long(key, val));
        else if (k == "fmin_hz") f.fmin_hz = detail::config_double(key, val);
        else if (k == "fmax_hz") f.fmax_hz = detail::config_double(key, val);
        else if (k == "fft_size") f.fft_size = static_cast<int>(detail::config_long(key, val));
        else throw Error(cat("config: unknown key '", key, "'"));
      } else if (key.rfind("pcen.", 0) == 0) {
        const std::string k = key.substr(5);
        PcenConfig& p = cfg.pcen;
        if (k == "s") p.s = detail::config_double(key, val);
        else if (k == "alpha") p.alpha = detail::config_double(key, val);
        else if (k == "delta") p.delta = detail::config_double(key, val);
        else if (k == "r") p.r = detail::config_double(key, val);
        else if (k == "eps") p.eps = detail::config_double(key, val);
        else throw Error(cat("config: unknown key '", key, "'"));
      } else {
        throw Error(cat("config: unknown key '", key, "'"));
      }
    }
    if (!model_record.empty()) cfg.model = ModelConfig::from_record(model_record);
    cfg.validate();
    return cfg;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error(cat("config: cannot open '", path, "'"));
    std::stringstream buf;
    buf << is.rdbuf();
    return from_text(buf.str());
  }
};

}  // namespace kws

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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kws/checkpoint.hpp"
#include "kws/config.hpp"
#include "kws/evaluation.hpp"
#include "kws/streaming.hpp"
#include "kws/training.hpp"

namespace {

kws::RunConfig LoadRunConfig(const std::string& path) {
  return path.empty() ? kws::RunConfig{} : kws::RunConfig::from_file(path);
}

void ReportOperatingPoint(const kws::EvalScores& scores, double fa_budget,
                          const std::string& csv, const std::string& svg) {
  const std::vector<kws::RocPoint> curve = kws::roc_curve(scores);
  const double frr = kws::frr_at_fa(curve, fa_budget, &std::cerr);
  std::cout << "clips: " << scores.positives.size() << " positive, " << scores.negatives.size()
            << " negative (" << scores.negative_hours << " h negative audio)\n"
            << "FRR at <=" << fa_budget << " FA/h: " << frr << "\n";
  if (!csv.empty()) kws::write_roc_csv(csv, curve);
  if (!svg.empty()) kws::write_roc_svg(svg, curve);
}

int Run(int argc, char** argv) {
  CLI::App app{"small-footprint keyword spotting toolkit"};
  app.require_subcommand(1);

  // featurize ---------------------------------------------------------------
  auto* featurize = app.add_subcommand("featurize", "convert a WAV file to a feature file");
  std::string fz_input, fz_output, fz_config;
  featurize->add_option("--input", fz_input, "input WAV file")->required();
  featurize->add_option("--output", fz_output, "output feature file")->required();
  featurize->add_option("--config", fz_config, "run configuration file");

  // train -------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a detector from manifests");
  std::string tr_config, tr_train_manifest, tr_val_manifest, tr_output_dir;
  bool tr_dump = false;
  train->add_option("--config", tr_config, "run configuration file");
  train->add_option("--train-manifest", tr_train_manifest, "training clips (TSV)");
  train->add_option("--val-manifest", tr_val_manifest, "validation clips (TSV)");
  train->add_option("--output-dir", tr_output_dir, "directory for model.kwsc and metrics.csv");
  train->add_flag("--dump-config", tr_dump, "print the effective configuration and exit");

  // eval --------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "score a labelled manifest and report FRR/FA");
  std::string ev_model, ev_manifest, ev_config, ev_csv, ev_svg;
  double ev_fa = 1.0;
  eval->add_option("--model", ev_model, "model checkpoint")->required();
  eval->add_option("--manifest", ev_manifest, "evaluation clips (TSV)")->required();
  eval->add_option("--config", ev_config, "run configuration file");
  eval->add_option("--fa-per-hour", ev_fa, "false-alarm budget (per hour)");
  eval->add_option("--roc-csv", ev_csv, "write the operating-point sweep as CSV");
  eval->add_option("--roc-svg", ev_svg, "write the tradeoff curve as SVG");

  // stream ------------------------------------------------------------------
  auto* stream = app.add_subcommand("stream", "decode a WAV file frame by frame");
  std::string st_model, st_input, st_config;
  double st_threshold = 0.5;
  stream->add_option("--model", st_model, "model checkpoint")->required();
  stream->add_option("--input", st_input, "input WAV file")->required();
  stream->add_option("--config", st_config, "run configuration file");
  stream->add_option("--threshold", st_threshold, "detection threshold");

  // params ------------------------------------------------------------------
  auto* params = app.add_subcommand("params", "print the parameter count of a configuration");
  kws::ModelConfig pm;
  params->add_option("--arch", pm.arch, "attention | deep_kws");
  params->add_option("--encoder", pm.encoder, "lstm | gru | crnn | dnn")->required();
  params->add_option("--layers", pm.layers, "recurrent/hidden layers")->required();
  params->add_option("--nodes", pm.nodes, "nodes per layer")->required();
  params->add_option("--attention", pm.attention, "soft | average");
  params->add_option("--conv-filters", pm.conv_filters, "crnn conv filters");
  params->add_option("--feature-dim", pm.feature_dim, "feature channels");
  params->add_option("--classes", pm.num_classes, "output classes");

  // roc ---------------------------------------------------------------------
  auto* roc = app.add_subcommand("roc", "operating points from a label,score CSV");
  std::string rc_scores, rc_csv, rc_svg;
  double rc_hours = 0, rc_fa = 1.0;
  roc->add_option("--scores", rc_scores, "CSV of label,score rows")->required();
  roc->add_option("--hours", rc_hours, "hours of negative audio behind the scores")->required();
  roc->add_option("--fa-per-hour", rc_fa, "false-alarm budget (per hour)");
  roc->add_option("--csv", rc_csv, "write the sweep as CSV");
  roc->add_option("--svg", rc_svg, "write the curve as SVG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // 2 for usage errors, 0 for --help
  }

  if (featurize->parsed()) {
    const kws::RunConfig rc = LoadRunConfig(fz_config);
    const kws::FeatureMatrix fm = kws::featurize(kws::read_wav(fz_input), rc.features, rc.pcen);
    kws::write_features(fz_output, fm);
    std::cout << fz_output << ": " << fm.num_frames() << " frames x " << fm.channels()
              << " channels\n";
  } else if (train->parsed()) {
    const kws::RunConfig rc = LoadRunConfig(tr_config);
    if (tr_dump) {
      std::cout << rc.to_text();
      return 0;
    }
    if (tr_train_manifest.empty() || tr_val_manifest.empty() || tr_output_dir.empty())
      throw kws::Error("train: --train-manifest, --val-manifest and --output-dir are required");
    const kws::Dataset train_ds =
        kws::load_dataset(tr_train_manifest, rc.features, rc.pcen, &std::cerr);
    const kws::Dataset val_ds = kws::load_dataset(tr_val_manifest, rc.features, rc.pcen, &std::cerr);
    kws::TrainResult result = kws::train_model(rc.model, rc.train, train_ds, val_ds, &std::cout);
    std::filesystem::create_directories(tr_output_dir);
    const std::string model_path = tr_output_dir + "/model.kwsc";
    kws::save_checkpoint(model_path, result.model);
    kws::write_metrics_csv(tr_output_dir + "/metrics.csv", result.metrics);
    std::cout << "best_val_loss=" << result.best_val_loss << " at step " << result.best_step
              << "\nwrote " << model_path << "\n";
  } else if (eval->parsed()) {
    const kws::RunConfig rc = LoadRunConfig(ev_config);
    const kws::Model<float> model = kws::load_checkpoint(ev_model);
    const kws::Dataset ds = kws::load_dataset(ev_manifest, rc.features, rc.pcen, &std::cerr);
    const kws::EvalScores scores = kws::score_dataset(model, ds, rc.features.frame_hop_s);
    ReportOperatingPoint(scores, ev_fa, ev_csv, ev_svg);
  } else if (stream->parsed()) {
    const kws::RunConfig rc = LoadRunConfig(st_config);
    const kws::Model<float> model = kws::load_checkpoint(st_model);
    const kws::StreamResult result = kws::stream_file(
        model, st_input, std::cout, static_cast<float>(st_threshold), rc.features, rc.pcen);
    for (const kws::DetectEvent& e : result.events)
      std::cerr << "event frame=" << e.frame << " time=" << e.time_s << " score=" << e.score
                << "\n";
  } else if (params->parsed()) {
    std::cout << kws::count_params(pm) << "\n";
  } else if (roc->parsed()) {
    std::ifstream is(rc_scores);
    if (!is) throw kws::Error(kws::cat("roc: cannot open '", rc_scores, "'"));
    kws::EvalScores scores;
    scores.negative_hours = rc_hours;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty() || line == "label,score") continue;
      const std::size_t comma = line.find(',');
      if (comma == std::string::npos)
        throw kws::Error(kws::cat("roc: line ", line_no, ": expected label,score"));
      const int label = static_cast<int>(kws::detail::config_long("label", line.substr(0, comma)));
      const float score =
          static_cast<float>(kws::detail::config_double("score", line.substr(comma + 1)));
      (label > 0 ? scores.positives : scores.negatives).push_back(score);
    }
    ReportOperatingPoint(scores, rc_fa, rc_csv, rc_svg);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

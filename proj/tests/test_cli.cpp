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

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "gtest/gtest.h"
#include "kws/features.hpp"
#include "kws/rng.hpp"
#include "kws/wav.hpp"

namespace kws {
namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string Slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

CliResult RunCli(const std::string& args) {
  static int call = 0;
  const std::string dir = ::testing::TempDir();
  const std::string out = dir + "cli_out_" + std::to_string(call) + ".txt";
  const std::string err = dir + "cli_err_" + std::to_string(call) + ".txt";
  ++call;
  const std::string cmd = std::string(KWS_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = Slurp(out);
  r.err = Slurp(err);
  return r;
}

TEST(Cli, ParamsPrintsParameterCounts) {
  EXPECT_EQ(RunCli("params --encoder gru --layers 2 --nodes 64 --attention soft").out, "53442\n");
  EXPECT_EQ(RunCli("params --encoder lstm --layers 2 --nodes 64 --attention soft").out, "64258\n");
  EXPECT_EQ(RunCli("params --encoder crnn --layers 1 --nodes 64 --conv-filters 8").out, "52522\n");
  EXPECT_EQ(RunCli("params --arch deep_kws --encoder dnn --layers 3 --nodes 64 --classes 5").out,
            "62469\n");
}

TEST(Cli, HelpExitsZeroAndListsSubcommands) {
  const CliResult r = RunCli("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("featurize"), std::string::npos);
  EXPECT_NE(r.out.find("stream"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(RunCli("params --bogus 1").code, 2);
  EXPECT_EQ(RunCli("definitely-not-a-subcommand").code, 2);
  EXPECT_EQ(RunCli("").code, 2);  // a subcommand is required
}

TEST(Cli, RuntimeErrorsExitOne) {
  const CliResult r = RunCli("eval --model missing.kwsc --manifest missing.tsv");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, DumpConfigIsAFixedPoint) {
  const CliResult first = RunCli("train --dump-config");
  ASSERT_EQ(first.code, 0);
  EXPECT_NE(first.out.find("model.encoder=gru"), std::string::npos);
  EXPECT_NE(first.out.find("train.lr=0.001"), std::string::npos);
  const std::string path = ::testing::TempDir() + "dumped_config.txt";
  std::ofstream(path) << first.out;
  const CliResult second = RunCli("train --config " + path + " --dump-config");
  ASSERT_EQ(second.code, 0);
  EXPECT_EQ(second.out, first.out);
}

TEST(Cli, FeaturizeMatchesTheLibrary) {
  const std::string dir = ::testing::TempDir();
  Rng rng(11);
  std::vector<float> samples(8000);
  for (float& s : samples) s = static_cast<float>(rng.uniform(-0.5, 0.5));
  const std::string wav = dir + "cli_feat.wav";
  write_wav_16bit(wav, samples, 16000);

  const std::string out = dir + "cli_feat.kwsf";
  const CliResult r = RunCli("featurize --input " + wav + " --output " + out);
  ASSERT_EQ(r.code, 0) << r.err;

  const FeatureMatrix direct = featurize(read_wav(wav), {}, {});
  const FeatureMatrix loaded = read_features(out);
  ASSERT_EQ(loaded.num_frames(), direct.num_frames());
  ASSERT_EQ(loaded.channels(), direct.channels());
  for (std::size_t i = 0; i < direct.frames.numel(); ++i)
    ASSERT_EQ(loaded.frames[i], direct.frames[i]) << "element " << i;
}

// Builds a small separable corpus of precomputed feature files plus
// manifests, and exercises train -> eval -> stream end to end.
class CliPipeline : public ::testing::Test {
 protected:
  static std::string MakeCorpus() {
    const std::string dir = ::testing::TempDir() + "cli_corpus/";
    std::filesystem::create_directories(dir);
    Rng rng(400);
    const auto write_clip = [&](const std::string& name, bool positive, long span_start) {
      FeatureMatrix fm;
      fm.frames = TensorF({60, 40});
      for (float& v : fm.frames.values()) v = static_cast<float>(rng.uniform(0.0, 0.1));
      if (positive)
        for (long t = span_start; t < span_start + 20; ++t)
          for (std::size_t c = 8; c < 24; ++c)
            fm.frames(static_cast<std::size_t>(t), c) += 1.0f;
      write_features(dir + name, fm);
    };
    const auto write_manifest = [&](const std::string& name, int pos, int neg,
                                    const std::string& tag) {
      std::ofstream os(dir + name);
      for (int i = 0; i < pos; ++i) {
        const long start = 5 + (i * 7) % 30;
        const std::string clip = tag + "_pos" + std::to_string(i) + ".kwsf";
        write_clip(clip, true, start);
        os << clip << "\t1\t" << start << "\t" << start + 20 << "\n";
      }
      for (int i = 0; i < neg; ++i) {
        const std::string clip = tag + "_neg" + std::to_string(i) + ".kwsf";
        write_clip(clip, false, 0);
        os << clip << "\t0\n";
      }
    };
    write_manifest("train.tsv", 10, 10, "train");
    write_manifest("val.tsv", 4, 4, "val");
    write_manifest("test.tsv", 6, 6, "test");
    std::ofstream(dir + "run.cfg") << "model.layers=1\n"
                                      "model.nodes=8\n"
                                      "train.steps=40\n"
                                      "train.batch_pos=4\n"
                                      "train.batch_neg=4\n"
                                      "train.crop_frames=30\n"
                                      "train.lr=0.005\n"
                                      "train.lr_min=0.0005\n"
                                      "train.eval_every=10\n";
    return dir;
  }
};

TEST_F(CliPipeline, TrainEvalAndStreamEndToEnd) {
  const std::string dir = MakeCorpus();
  const CliResult train = RunCli("train --config " + dir + "run.cfg --train-manifest " + dir +
                                 "train.tsv --val-manifest " + dir + "val.tsv --output-dir " +
                                 dir + "out");
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_NE(train.out.find("best_val_loss="), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir + "out/model.kwsc"));
  EXPECT_TRUE(std::filesystem::exists(dir + "out/metrics.csv"));

  const CliResult eval = RunCli("eval --model " + dir + "out/model.kwsc --manifest " + dir +
                                "test.tsv --fa-per-hour 2 --roc-csv " + dir + "roc.csv");
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_NE(eval.out.find("FRR at <=2 FA/h:"), std::string::npos);
  const std::string roc = Slurp(dir + "roc.csv");
  EXPECT_NE(roc.find("threshold,frr,fa_per_hour"), std::string::npos);

  // Streaming needs real audio; any tone will do for the smoke test.
  std::vector<float> samples(16000);
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i] = 0.3f * std::sin(2.0 * std::numbers::pi * 440.0 * i / 16000.0);
  write_wav_16bit(dir + "tone.wav", samples, 16000);
  const CliResult stream =
      RunCli("stream --model " + dir + "out/model.kwsc --input " + dir + "tone.wav");
  ASSERT_EQ(stream.code, 0) << stream.err;
  EXPECT_EQ(std::count(stream.out.begin(), stream.out.end(), '\n'), 98);
  std::istringstream first_line(stream.out.substr(0, stream.out.find('\n')));
  long frame;
  double time_s, score;
  ASSERT_TRUE(first_line >> frame >> time_s >> score);
  EXPECT_EQ(frame, 0);
  EXPECT_GE(score, 0.0);
  EXPECT_LE(score, 1.0);
}

TEST(Cli, RocSubcommandSweepsAScoresFile) {
  const std::string path = ::testing::TempDir() + "cli_scores.csv";
  std::ofstream(path) << "label,score\n1,0.9\n1,0.8\n1,0.3\n0,0.2\n0,0.1\n0,0.4\n";
  const CliResult r = RunCli("roc --scores " + path + " --hours 0.5 --fa-per-hour 2.1");
  ASSERT_EQ(r.code, 0) << r.err;
  // At threshold 0.3 every positive fires and only the 0.4 negative does:
  // 1 alarm / 0.5 h = 2 FA/h, inside the 2.1 budget, with FRR 0.
  EXPECT_NE(r.out.find("FRR at <=2.1 FA/h: 0\n"), std::string::npos);
  EXPECT_NE(r.out.find("3 positive, 3 negative"), std::string::npos);
}

}  // namespace
}  // namespace kws

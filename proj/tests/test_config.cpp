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

#include <fstream>
#include <string>

#include "gtest/gtest.h"
#include "kws/config.hpp"

namespace kws {
namespace {

TEST(RunConfig, RoundTripsThroughText) {
  RunConfig cfg;
  cfg.model.encoder = "crnn";
  cfg.model.layers = 1;
  cfg.model.nodes = 32;
  cfg.model.conv_filters = 16;
  cfg.model.attention = "average";
  cfg.train.steps = 1234;
  cfg.train.lr = 3.75e-4;
  cfg.train.seed = 99;
  cfg.features.n_mels = 40;
  cfg.features.fmax_hz = 7600.0;
  cfg.pcen.delta = 1.5;

  const RunConfig copy = RunConfig::from_text(cfg.to_text());
  EXPECT_EQ(copy.model.encoder, "crnn");
  EXPECT_EQ(copy.model.conv_filters, 16);
  EXPECT_EQ(copy.model.attention, "average");
  EXPECT_EQ(copy.train.steps, 1234);
  EXPECT_DOUBLE_EQ(copy.train.lr, 3.75e-4);
  EXPECT_EQ(copy.train.seed, 99u);
  EXPECT_DOUBLE_EQ(copy.features.fmax_hz, 7600.0);
  EXPECT_DOUBLE_EQ(copy.pcen.delta, 1.5);
  // A second dump is textually identical (the format is a fixed point).
  EXPECT_EQ(copy.to_text(), cfg.to_text());
}

TEST(RunConfig, PartialFilesOverrideOnlyTheGivenKeys) {
  const RunConfig cfg = RunConfig::from_text(
      "version=1\n"
      "model.nodes=32\n"
      "train.lr=0.005\n");
  EXPECT_EQ(cfg.model.nodes, 32);
  EXPECT_EQ(cfg.model.encoder, "gru");  // untouched default
  EXPECT_DOUBLE_EQ(cfg.train.lr, 0.005);
  EXPECT_EQ(cfg.train.steps, 1000);
  EXPECT_EQ(cfg.features.sample_rate, 16000);
}

TEST(RunConfig, IgnoresCommentsAndBlankLines) {
  const RunConfig cfg = RunConfig::from_text(
      "# a full-line comment\n"
      "\n"
      "model.layers=3   # trailing comment\n"
      "\r\n"
      "train.batch_pos=7\n");
  EXPECT_EQ(cfg.model.layers, 3);
  EXPECT_EQ(cfg.train.batch_pos, 7);
}

TEST(RunConfig, RejectsUnknownKeys) {
  EXPECT_THROW(RunConfig::from_text("model.bogus=1\n"), Error);
  EXPECT_THROW(RunConfig::from_text("train.bogus=1\n"), Error);
  EXPECT_THROW(RunConfig::from_text("features.bogus=1\n"), Error);
  EXPECT_THROW(RunConfig::from_text("pcen.q=2\n"), Error);
  EXPECT_THROW(RunConfig::from_text("bogus=1\n"), Error);
}

TEST(RunConfig, RejectsBadValuesAndMalformedLines) {
  EXPECT_THROW(RunConfig::from_text("train.lr=abc\n"), Error);
  EXPECT_THROW(RunConfig::from_text("model.layers=x\n"), Error);
  EXPECT_THROW(RunConfig::from_text("train.steps=10e\n"), Error);
  EXPECT_THROW(RunConfig::from_text("model.nodes\n"), Error);
}

TEST(RunConfig, RejectsUnsupportedVersions) {
  EXPECT_THROW(RunConfig::from_text("version=2\n"), Error);
  EXPECT_THROW(RunConfig::from_text("version=0\n"), Error);
}

TEST(RunConfig, ValidatesComponentSemantics) {
  EXPECT_THROW(RunConfig::from_text("train.lr_decay=2\n"), Error);
  EXPECT_THROW(RunConfig::from_text("model.attention=hard\n"), Error);
  EXPECT_THROW(RunConfig::from_text("features.n_mels=300\n"), Error);
}

TEST(RunConfig, LoadsFromAFile) {
  const std::string path = ::testing::TempDir() + "run_config.txt";
  std::ofstream os(path);
  os << "model.nodes=16\n";
  os.close();
  EXPECT_EQ(RunConfig::from_file(path).model.nodes, 16);
  EXPECT_THROW(RunConfig::from_file(::testing::TempDir() + "missing_config.txt"), Error);
}

}  // namespace
}  // namespace kws

// Copyright 2026 The EmoTx Authors
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

#include <doctest.h>

#include <fstream>

#include "emotx/config.hpp"
#include "emotx/error.hpp"
#include "support.hpp"

using namespace emotx;

TEST_CASE("key-value parsing handles comments, blanks and fractions") {
  const auto cfg = KeyValueConfig::parse("# header\n\nD = 32\n tau=1/3  # inline\nlabel_set = top10\n");
  CHECK(cfg.get("D", 0) == 32);
  CHECK(cfg.get("tau", 0.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(cfg.get("label_set", std::string()) == "top10");
  CHECK(cfg.get("absent", 7) == 7);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("D = 3.5").get("D", 0), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("D = abc").get("D", 0.0), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("x = maybe").get("x", false), ConfigError);
}

TEST_CASE("apply overlays known keys and rejects unknown ones") {
  ModelConfig m;
  TrainConfig t;
  KeyValueConfig::parse("label_set = top10\nD = 16\nheads = 4\nlr = 0.001\ndrop_modality = video,dialog\n")
      .apply(m, t);
  CHECK(m.num_labels == 10);
  CHECK(m.model_dim == 16);
  CHECK(t.learning_rate == 0.001);
  CHECK(t.drop == DroppedModalities{true, false, true});
  CHECK_NOTHROW(m.validate());

  ModelConfig m2;
  KeyValueConfig::parse("model = emotx-1cls\n").apply(m2, t);
  CHECK(m2.cls_mode == ClsMode::kSingle);
  CHECK(m2.model == ModelKind::kEmoTx);
  CHECK_THROWS_AS(KeyValueConfig::parse("bogus = 1\n").apply(m2, t), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/emotx.cfg"), IoError);
}

TEST_CASE("validation catches inconsistent configs") {
  ModelConfig c = testing::small_config(3, 2, 4, 8);
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.num_labels = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.layers = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.model = ModelKind::kSingleTx;
  CHECK_NOTHROW(bad.validate());
  bad = c;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("names round-trip") {
  for (auto kind : {ModelKind::kEmoTx, ModelKind::kSingleTx, ModelKind::kMlp}) {
    CHECK(parse_model_kind(to_string(kind)) == kind);
  }
  for (auto mode : {ClsMode::kPerEmotion, ClsMode::kSingle}) CHECK(parse_cls_mode(to_string(mode)) == mode);
  for (int bits = 0; bits < 8; ++bits) {
    const DroppedModalities d{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0};
    CHECK(parse_dropped(to_string(d)) == d);
  }
  CHECK_THROWS_AS(parse_dropped("audio"), ConfigError);
  CHECK_THROWS_AS(parse_model_kind("rnn"), ConfigError);
}

TEST_CASE("derived sizes") {
  ModelConfig c;
  CHECK(c.time_bins() == 301);
  CHECK(c.ffn_width() == 4 * c.model_dim);
  c.num_labels = 25;
  c.max_characters = 4;
  c.max_frames = 300;
  CHECK(c.max_tokens() == 1925);
  c.cls_mode = ClsMode::kSingle;
  CHECK(c.max_tokens() == 1 + 300 + 4 * 301 + 300);
}

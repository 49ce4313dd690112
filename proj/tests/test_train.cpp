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
#include <limits>
#include <sstream>

#include "emotx/error.hpp"
#include "emotx/evaluation.hpp"
#include "emotx/train.hpp"
#include "support.hpp"

using namespace emotx;

namespace {

struct Fixture {
  SyntheticData data;
  SceneBatchSource source() const { return {&data.dataset, data.bundles}; }
};

Fixture synthetic(std::uint64_t seed, int scenes, double signal, int k = 3) {
  return {generate_synthetic(seed, scenes, LabelSet::named("top" + std::to_string(k)), {6, 5, 4}, signal)};
}

ModelConfig tiny(int k = 3) {
  auto cfg = testing::small_config(k, 4, 12, 8, 1, 2);
  return cfg;
}

}  // namespace

TEST_CASE("frame sampling counts and intervals") {
  CHECK(sample_frame_times(2.0, 300, SampleMode::kInfer, 0).size() == 6);
  CHECK(sample_frame_times(200.0, 300, SampleMode::kInfer, 0).size() == 300);
  CHECK(sample_frame_times(2.5, 300, SampleMode::kInfer, 0).size() == 8);
  CHECK(sample_frame_times(1.0 / 3.0, 300, SampleMode::kInfer, 0).size() == 1);
  CHECK_THROWS_AS(sample_frame_times(0.0, 300, SampleMode::kInfer, 0), InputError);

  const auto infer = sample_frame_times(4.0, 300, SampleMode::kInfer, 0);
  for (std::size_t i = 0; i < infer.size(); ++i) CHECK(infer[i] == static_cast<double>(i) / 3.0);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto t = sample_frame_times(7.3, 12, SampleMode::kTrain, seed);
    REQUIRE(t.size() == 12);
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(t[i] >= i / 3.0);
      CHECK(t[i] < (i + 1) / 3.0);
    }
    CHECK(t == sample_frame_times(7.3, 12, SampleMode::kTrain, seed));
  }
  CHECK(sample_frame_times(7.3, 12, SampleMode::kTrain, 1) != sample_frame_times(7.3, 12, SampleMode::kTrain, 2));
}

TEST_CASE("checkpoint selection uses the geometric mean with earliest ties") {
  using H = std::vector<std::pair<double, double>>;
  CHECK(select_checkpoint(H{{0.5, 0.5}, {0.8, 0.2}, {0.6, 0.6}}) == 2);
  CHECK(select_checkpoint(H{{0.4, 0.9}, {0.9, 0.4}, {0.6, 0.6}}) == 0);
  CHECK(select_checkpoint(H{{0.0, 1.0}, {0.1, 0.1}}) == 1);
  CHECK(select_checkpoint(H{{0.3, 0.3}}) == 0);
  CHECK_THROWS_AS(select_checkpoint(H{}), InputError);
}

TEST_CASE("plateau scheduler reduces after patience bad epochs") {
  PlateauScheduler s(1.0, 0.1, 2, 1e-4);
  CHECK(s.step(0.5) == 1.0);
  CHECK(s.step(0.5) == 1.0);
  CHECK(s.step(0.50005) == doctest::Approx(0.1));
  CHECK(s.reductions() == 1);
  CHECK(s.step(0.6) == doctest::Approx(0.1));
  CHECK(s.step(0.6) == doctest::Approx(0.1));
  CHECK(s.step(0.6) == doctest::Approx(0.01));
  // Monotone non-increasing, at most one reduction per `patience` epochs.
  PlateauScheduler flat(1.0, 0.5, 3, 0.0);
  double prev = flat.lr();
  for (int e = 0; e < 30; ++e) {
    const double lr = flat.step(0.1);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK(flat.reductions() == 9);
  CHECK_THROWS_AS(PlateauScheduler(1.0, 1.0, 2, 0.0), ConfigError);
}

TEST_CASE("first Adam step moves by lr times the gradient sign") {
  ParamStore p;
  p.add("w", (Matrix(1, 3) << 1.0, 2.0, 3.0).finished());
  ParamStore g = p.zeros_like();
  g.at("w") << 0.5, -2.0, 0.0;
  Adam adam(p);
  adam.step(p, g, 0.1);
  CHECK(p.at("w")(0) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p.at("w")(1) == doctest::Approx(2.1).epsilon(1e-7));
  CHECK(p.at("w")(2) == 3.0);
}

TEST_CASE("training is deterministic and logs every epoch") {
  const Fixture f = synthetic(1, 12, 1.0);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.learning_rate = 1e-3;
  tc.seed = 7;
  std::ostringstream a, b;
  TrainHooks ha, hb;
  ha.log = &a;
  hb.log = &b;
  const TrainResult r1 = train(f.source(), tiny(), tc, ha);
  const TrainResult r2 = train(f.source(), tiny(), tc, hb);
  CHECK(a.str() == b.str());
  CHECK(r1.history.size() == 3);
  CHECK(a.str().find("epoch=2 loss=") != std::string::npos);
  for (std::size_t i = 0; i < r1.best.params.size(); ++i) CHECK(r1.best.params.at(i) == r2.best.params.at(i));
  std::vector<std::pair<double, double>> h;
  for (const auto& m : r1.history) h.emplace_back(m.scene_map, m.char_map);
  CHECK(static_cast<int>(select_checkpoint(h)) == r1.best_epoch);

  tc.seed = 8;
  std::ostringstream c;
  TrainHooks hc;
  hc.log = &c;
  train(f.source(), tiny(), tc, hc);
  CHECK(c.str() != a.str());
}

TEST_CASE("on_epoch can stop training early") {
  const Fixture f = synthetic(2, 8, 1.0);
  TrainConfig tc;
  tc.epochs = 10;
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochMetrics& m) { return m.epoch == 1; };
  CHECK(train(f.source(), tiny(), tc, hooks).history.size() == 2);
}

TEST_CASE("without signal the validation mAP stays near chance") {
  const Fixture f = synthetic(3, 96, 0.0);
  TrainConfig tc;
  tc.epochs = 3;
  tc.learning_rate = 1e-3;
  const TrainResult r = train(f.source(), tiny(), tc);
  const auto preds = infer(r.best, f.source(), "val");
  const LevelTables t = level_tables(preds, f.data.dataset, Level::kScene, 4);
  const double map = *mean_ap(t.scores, t.targets).map;
  const RandomBaseline chance = random_baseline(t.targets, 200, 1);
  CHECK(std::abs(map - chance.mean) < 0.2);
}

TEST_CASE("mismatched label sets are rejected") {
  const Fixture f = synthetic(4, 8, 1.0);
  auto cfg = tiny(10);
  TrainConfig tc;
  CHECK_THROWS_AS(train(f.source(), cfg, tc), ConfigError);
  const Model m = init_model(cfg, 1);
  CHECK_THROWS_AS(infer(m, f.source(), ""), ConfigError);
}

TEST_CASE("a non-finite loss aborts with the batch in the message") {
  Fixture f = synthetic(5, 8, 1.0);
  f.data.bundles[0].video.values(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.batch_size = 8;
  std::ostringstream log;
  TrainHooks hooks;
  hooks.log = &log;
  try {
    train(f.source(), tiny(), tc, hooks);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("scene_0000=") != std::string::npos);
    CHECK(log.str().find("abort:") != std::string::npos);
  }
}

TEST_CASE("inference covers a split or every scene, and writes predictions") {
  const Fixture f = synthetic(6, 12, 1.0);
  const Model m = init_model(tiny(), 2);
  const auto all = infer(m, f.source(), "");
  const auto val = infer(m, f.source(), "val");
  CHECK(all.size() == 12);
  CHECK(val.size() == 3);
  const LevelTables chars = level_tables(all, f.data.dataset, Level::kCharacter, 4);
  std::size_t expected = 0;
  for (const auto& s : f.data.dataset.scenes) expected += std::min<std::size_t>(s.characters.size(), 4);
  CHECK(chars.scores.size() == expected);

  const auto dir = testing::scratch_dir("predictions");
  write_predictions(val, dir / "p.tsv");
  std::ifstream in(dir / "p.tsv");
  std::string line;
  int rows = 0;
  std::getline(in, line);
  CHECK(line == "scene_id\ttarget\tprobabilities");
  while (std::getline(in, line)) ++rows;
  std::size_t val_rows = 0;
  for (const auto& p : val) val_rows += 1 + p.character_ids.size();
  CHECK(rows == static_cast<int>(val_rows));
}

TEST_CASE("scenes with too many characters are truncated before the model sees them") {
  const auto cfg = testing::small_config(3, 2, 6, 8);
  SceneAnnotation s;
  s.scene_id = "crowd";
  s.duration = 2.0;
  s.characters = {{"a", {1, 0, 0}, 1.0}, {"b", {0, 0, 0}, 2.0}, {"c", {0, 1, 1}, 0.5}};
  s.scene_labels = {1, 1, 1};
  const SceneAnnotation p = prepared_scene(s, cfg);
  REQUIRE(p.characters.size() == 2);
  CHECK(p.characters[0].id == "a");
  CHECK(p.characters[1].id == "c");
}

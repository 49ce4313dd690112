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

#include <random>

#include "emotx/baselines.hpp"
#include "emotx/error.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace emotx;

namespace {

ModelConfig baseline_config(ModelKind kind, int layers = 1) {
  auto cfg = testing::small_config(3, 3, 8, 8, layers, 2);
  cfg.model = kind;
  return cfg;
}

struct Case {
  testing::SceneFixture f;
  std::vector<double> times;
  TokenLayout layout;
};

Case make_case(std::uint64_t seed, const ModelConfig& cfg, int chars = 3) {
  std::mt19937_64 rng(seed);
  Case c{testing::random_scene(rng, cfg, chars, 10, 3), {}, {}};
  c.times = testing::infer_times(c.f.scene.duration, cfg.max_frames);
  c.layout = plan_tokens(c.f.bundle, c.f.scene, c.times, cfg);
  return c;
}

double max_gap(const Probabilities& a, const Probabilities& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("MLP pooling is an element-wise max of projected rows") {
  const auto cfg = baseline_config(ModelKind::kMlp);
  const auto c = make_case(1, cfg);
  Model m = init_model(cfg, 1);
  std::mt19937_64 rng(2);
  m.params.at("proj.video.bias") = testing::gaussian(rng, 1, cfg.model_dim);
  ag::Graph g;
  const Matrix pooled = mlp_scene_pool(g, m.params, cfg, c.layout, c.f.bundle).value();
  Eigen::RowVectorXd expected = Eigen::RowVectorXd::Constant(cfg.model_dim, -1e300);
  for (double t : c.times) {
    const Eigen::RowVectorXd row =
        (m.params.at("proj.video.weight") * c.f.bundle.video.values.row(frame_index(t)).transpose()).transpose() +
        m.params.at("proj.video.bias");
    expected = expected.cwiseMax(row);
  }
  for (Eigen::Index j = 0; j < c.f.bundle.utterances.values.rows(); ++j) {
    const Eigen::RowVectorXd row =
        (m.params.at("proj.dialog.weight") * c.f.bundle.utterances.values.row(j).transpose()).transpose() +
        m.params.at("proj.dialog.bias");
    expected = expected.cwiseMax(row);
  }
  CHECK((pooled - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("MLP outputs follow their characters, not their slots") {
  const auto cfg = baseline_config(ModelKind::kMlp);
  const auto c = make_case(3, cfg);
  const Model m = init_model(cfg, 3);
  const Prediction a = predict_scene(m, c.f.bundle, c.layout);
  SceneAnnotation rotated = c.f.scene;
  std::rotate(rotated.characters.begin(), rotated.characters.begin() + 1, rotated.characters.end());
  const Prediction b = predict_scene(m, c.f.bundle, plan_tokens(c.f.bundle, rotated, c.times, cfg));
  CHECK(a.scene == b.scene);
  CHECK(*a.characters[1] == *b.characters[0]);
  CHECK(*a.characters[2] == *b.characters[1]);
  CHECK(*a.characters[0] == *b.characters[2]);
}

TEST_CASE("an MLP character without boxes has no prediction") {
  const auto cfg = baseline_config(ModelKind::kMlp);
  auto c = make_case(4, cfg, 2);
  c.f.bundle.characters[1].frames = {};
  c.f.bundle.characters[1].frames.values.resize(0, cfg.feature_dims.character);
  const TokenLayout layout = plan_tokens(c.f.bundle, c.f.scene, c.times, cfg);
  const Model m = init_model(cfg, 4);
  const Prediction p = predict_scene(m, c.f.bundle, layout);
  CHECK(p.characters[0].has_value());
  CHECK_FALSE(p.characters[1].has_value());
}

TEST_CASE("single-token encoder ignores padding") {
  const auto cfg = baseline_config(ModelKind::kSingleTx, 2);
  const auto c = make_case(5, cfg);
  const Model m = init_model(cfg, 5);
  const Matrix base = single_tx_scene_cls(m, c.f.bundle, c.layout, 0);
  for (int extra : {1, 40, 100}) {
    CHECK((single_tx_scene_cls(m, c.f.bundle, c.layout, extra) - base).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("with zero layers the single-token output is the raw classifier token") {
  const auto cfg = baseline_config(ModelKind::kSingleTx, 0);
  const auto c = make_case(6, cfg);
  const Model m = init_model(cfg, 6);
  CHECK(single_tx_scene_cls(m, c.f.bundle, c.layout, 3) == m.params.at("stx.cls.scene"));
}

TEST_CASE("single-token character passes only see that character") {
  const auto cfg = baseline_config(ModelKind::kSingleTx, 1);
  auto c = make_case(7, cfg);
  const Model m = init_model(cfg, 7);
  const Prediction a = predict_scene(m, c.f.bundle, c.layout);
  std::mt19937_64 rng(8);
  c.f.bundle.video.values = testing::gaussian(rng, c.f.bundle.video.values.rows(), cfg.feature_dims.video);
  c.f.bundle.characters[0].frames.values.array() += 1.0;
  const Prediction b = predict_scene(m, c.f.bundle, c.layout);
  CHECK(max_gap(a.scene, b.scene) > 1e-9);
  CHECK(max_gap(*a.characters[0], *b.characters[0]) > 1e-9);
  CHECK(*a.characters[1] == *b.characters[1]);
  CHECK(*a.characters[2] == *b.characters[2]);
}

TEST_CASE("single-token scene output is invariant to token order") {
  const auto cfg = baseline_config(ModelKind::kSingleTx, 2);
  const auto c = make_case(9, cfg);
  const Model m = init_model(cfg, 9);
  SceneAnnotation rotated = c.f.scene;
  std::rotate(rotated.characters.begin(), rotated.characters.begin() + 1, rotated.characters.end());
  const Matrix a = single_tx_scene_cls(m, c.f.bundle, c.layout, 0);
  const Matrix b = single_tx_scene_cls(m, c.f.bundle, plan_tokens(c.f.bundle, rotated, c.times, cfg), 0);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("baseline gradients match finite differences") {
  for (auto kind : {ModelKind::kMlp, ModelKind::kSingleTx}) {
    auto cfg = baseline_config(kind, 1);
    cfg.max_frames = 4;
    std::mt19937_64 rng(10);
    const auto f = testing::random_scene(rng, cfg, 2, 5, 2);
    const auto times = testing::infer_times(f.scene.duration, cfg.max_frames);
    const TokenLayout layout = plan_tokens(f.bundle, f.scene, times, cfg);
    const Model m = init_model(cfg, 10);
    const auto report = testing::check_param_gradients(m, f.bundle, layout, f.scene, {1.0, 2.0, 1.0},
                                                       {1.0, 1.0, 3.0}, 3);
    CHECK_MESSAGE(report.max_relative_error < 1e-4, to_string(kind));
  }
}

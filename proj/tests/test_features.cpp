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
#include <random>
#include <sstream>

#include "emotx/error.hpp"
#include "emotx/evaluation.hpp"
#include "emotx/features.hpp"
#include "support.hpp"

using namespace emotx;

namespace {

bool same(const TimedFeatures& a, const TimedFeatures& b) {
  return a.times == b.times && a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() &&
         std::equal(a.values.data(), a.values.data() + a.values.size(), b.values.data());
}

bool same(const FeatureBundle& a, const FeatureBundle& b) {
  if (a.scene_id != b.scene_id || a.duration != b.duration || a.characters.size() != b.characters.size()) return false;
  if (!same(a.video, b.video) || !same(a.utterances, b.utterances)) return false;
  for (std::size_t i = 0; i < a.characters.size(); ++i) {
    if (a.characters[i].id != b.characters[i].id || !same(a.characters[i].frames, b.characters[i].frames)) return false;
  }
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Least-squares probe with intercept fitted on the rows themselves.
Eigen::VectorXd probe_scores(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a << x, Eigen::VectorXd::Ones(x.rows());
  const Eigen::VectorXd w = a.colPivHouseholderQr().solve(y);
  return a * w;
}

}  // namespace

TEST_CASE("bundle writer and reader round-trip bit-exactly") {
  std::mt19937_64 rng(1);
  const auto cfg = testing::small_config(3, 3, 30, 8);
  const auto f = testing::random_scene(rng, cfg, 3, 20, 4, "s1");
  const auto dir = testing::scratch_dir("bundle_io");
  save_bundle(f.bundle, dir);
  const FeatureBundle back = load_bundle("s1", dir, cfg.feature_dims);
  CHECK(same(f.bundle, back));
  CHECK(back.video.size() == 20);
}

TEST_CASE("bundle loading validates dims, files and timestamps") {
  std::mt19937_64 rng(2);
  const auto cfg = testing::small_config(3, 2, 30, 8);
  auto f = testing::random_scene(rng, cfg, 2, 12, 2, "s2");
  const auto dir = testing::scratch_dir("bundle_bad");
  save_bundle(f.bundle, dir);
  FeatureDims wrong = cfg.feature_dims;
  wrong.video = 512;
  CHECK_THROWS_AS(load_bundle("s2", dir, wrong), SchemaError);
  CHECK_THROWS_AS(load_bundle("missing", dir, cfg.feature_dims), IoError);

  f.bundle.utterances.times.back() = f.bundle.duration + 1.0;
  f.bundle.scene_id = "s3";
  save_bundle(f.bundle, dir);
  CHECK_THROWS_AS(load_bundle("s3", dir, cfg.feature_dims), SchemaError);
}

TEST_CASE("row order in a container does not matter") {
  std::mt19937_64 rng(3);
  const auto cfg = testing::small_config(3, 2, 30, 8);
  const auto f = testing::random_scene(rng, cfg, 2, 15, 3, "ordered");
  FeatureBundle shuffled = f.bundle;
  shuffled.scene_id = "shuffled";
  std::vector<int> perm(static_cast<std::size_t>(shuffled.video.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.video.times[i] = f.bundle.video.times[static_cast<std::size_t>(perm[i])];
    shuffled.video.values.row(static_cast<Eigen::Index>(i)) = f.bundle.video.values.row(perm[i]);
  }
  std::reverse(shuffled.characters.begin(), shuffled.characters.end());
  const auto dir = testing::scratch_dir("bundle_order");
  save_bundle(f.bundle, dir);
  save_bundle(shuffled, dir);
  FeatureBundle a = load_bundle("ordered", dir, cfg.feature_dims);
  FeatureBundle b = load_bundle("shuffled", dir, cfg.feature_dims);
  b.scene_id = a.scene_id;
  CHECK(same(a, b));
}

TEST_CASE("generator is deterministic per seed") {
  const auto da = testing::scratch_dir("gen_a");
  const auto db = testing::scratch_dir("gen_b");
  const LabelSet set = LabelSet::top10();
  write_synthetic(generate_synthetic(5, 12, set, {8, 8, 8}, 1.0), da);
  write_synthetic(generate_synthetic(5, 12, set, {8, 8, 8}, 1.0), db);
  CHECK(slurp(da / "scenes.jsonl") == slurp(db / "scenes.jsonl"));
  for (const auto& entry : std::filesystem::recursive_directory_iterator(da / "features")) {
    if (!entry.is_regular_file()) continue;
    CHECK(slurp(entry.path()) == slurp(db / std::filesystem::relative(entry.path(), da)));
  }
  const SyntheticData other = generate_synthetic(6, 12, set, {8, 8, 8}, 1.0);
  const SyntheticData first = generate_synthetic(5, 12, set, {8, 8, 8}, 1.0);
  CHECK_FALSE(first.bundles[0].video.values.isApprox(other.bundles[0].video.values));
}

TEST_CASE("generated scenes satisfy the schema") {
  const LabelSet set = LabelSet::top25();
  const SyntheticData d = generate_synthetic(9, 40, set, {8, 8, 8}, 1.0);
  REQUIRE(d.dataset.scenes.size() == 40);
  CHECK(d.dataset.split("val").size() == 10);
  for (std::size_t i = 0; i < d.dataset.scenes.size(); ++i) {
    const auto& s = d.dataset.scenes[i];
    CHECK_NOTHROW(validate_scene(s, set.size()));
    for (const auto& c : s.characters) {
      const CharacterFeatures* cf = d.bundles[i].find_character(c.id);
      REQUIRE(cf != nullptr);
      CHECK(c.box_seconds == doctest::Approx(cf->frames.size() / 3.0));
    }
    // Exactly three candidate frames per second.
    CHECK(static_cast<double>(d.bundles[i].video.size()) == doctest::Approx(3.0 * s.duration));
  }
  // Round-robin modality assignment.
  CHECK(d.label_modality[0] == Modality::kVideo);
  CHECK(d.label_modality[1] == Modality::kCharacter);
  CHECK(d.label_modality[2] == Modality::kDialog);
}

TEST_CASE("with signal, a linear probe separates every label") {
  const LabelSet set = LabelSet::top10();
  const FeatureDims dims{16, 16, 16};
  const SyntheticData d = generate_synthetic(21, 32, set, dims, 1.0);
  for (std::size_t k = 0; k < set.size(); ++k) {
    std::vector<Eigen::VectorXd> rows;
    std::vector<std::uint8_t> y;
    for (std::size_t s = 0; s < d.bundles.size(); ++s) {
      const auto& scene = d.dataset.scenes[s];
      const auto& b = d.bundles[s];
      switch (d.label_modality[k]) {
        case Modality::kVideo:
          rows.push_back(b.video.values.colwise().mean().transpose());
          y.push_back(scene.scene_labels[k]);
          break;
        case Modality::kDialog:
          rows.push_back(b.utterances.values.colwise().mean().transpose());
          y.push_back(scene.scene_labels[k]);
          break;
        case Modality::kCharacter:
          for (std::size_t c = 0; c < scene.characters.size(); ++c) {
            rows.push_back(b.find_character(scene.characters[c].id)->frames.values.colwise().mean().transpose());
            y.push_back(scene.characters[c].labels[k]);
          }
          break;
      }
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 16);
    Eigen::VectorXd t(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
      t(static_cast<Eigen::Index>(i)) = y[i];
    }
    const Eigen::VectorXd s = probe_scores(x, t);
    const std::vector<double> scores(s.data(), s.data() + s.size());
    const auto ap = average_precision(scores, y);
    REQUIRE(ap.has_value());
    CHECK_MESSAGE(*ap >= 0.95, "label " << k);
  }
}

TEST_CASE("signal only shifts the rows of positive labels") {
  const LabelSet set = LabelSet::top10();
  const SyntheticData off = generate_synthetic(4, 20, set, {8, 8, 8}, 0.0);
  const SyntheticData on = generate_synthetic(4, 20, set, {8, 8, 8}, 1.0);
  for (std::size_t s = 0; s < off.bundles.size(); ++s) {
    const auto& scene = on.dataset.scenes[s];
    CHECK(scene.scene_labels == off.dataset.scenes[s].scene_labels);
    bool video_positive = false;
    for (std::size_t k = 0; k < set.size(); ++k) {
      video_positive = video_positive || (on.label_modality[k] == Modality::kVideo && scene.scene_labels[k]);
    }
    const Eigen::MatrixXd diff = on.bundles[s].video.values - off.bundles[s].video.values;
    // The same shift on every row, and none without a positive video label.
    for (Eigen::Index r = 1; r < diff.rows(); ++r) CHECK((diff.row(r) - diff.row(0)).norm() < 1e-12);
    CHECK((diff.norm() > 0.0) == video_positive);
  }
}

TEST_CASE("synthetic datasets reload with their feature dims") {
  const auto dir = testing::scratch_dir("gen_reload");
  const SyntheticData d = generate_synthetic(8, 6, LabelSet::top10(), {7, 6, 5}, 1.0);
  write_synthetic(d, dir);
  const FeatureDims dims = read_feature_dims(dir);
  CHECK(dims == FeatureDims{7, 6, 5});
  const Dataset ds = read_dataset(dir / "scenes.jsonl");
  const auto bundles = load_bundles(ds, dir / "features", dims);
  REQUIRE(bundles.size() == 6);
  for (std::size_t i = 0; i < bundles.size(); ++i) CHECK(same(bundles[i], d.bundles[i]));
}

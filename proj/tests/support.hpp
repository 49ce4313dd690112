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

#pragma once

// Fixture builders and independent reference implementations shared by the
// test binaries. Nothing here calls into the code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "emotx/config.hpp"
#include "emotx/data_model.hpp"
#include "emotx/features.hpp"
#include "emotx/tokens.hpp"

namespace emotx::testing {

inline ModelConfig small_config(int k, int n, int t, int d, int layers = 2, int heads = 2) {
  ModelConfig c;
  c.label_set = "top" + std::to_string(k);
  c.num_labels = k;
  c.max_characters = n;
  c.max_frames = t;
  c.model_dim = d;
  c.layers = layers;
  c.heads = heads;
  c.feature_dims = {6, 5, 4};
  c.dropout = 0.0;
  return c;
}

struct SceneFixture {
  SceneAnnotation scene;
  FeatureBundle bundle;
};

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Random scene with `frames` raw frames at 3 fps, `chars` characters with
/// random contiguous windows, `utts` utterances and random labels.
inline SceneFixture random_scene(std::mt19937_64& rng, const ModelConfig& cfg, int chars, int frames, int utts,
                                 const std::string& id = "scene") {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneFixture f;
  const auto k = static_cast<std::size_t>(cfg.num_labels);
  f.scene.scene_id = id;
  f.scene.duration = std::max(frames, 1) / 3.0;
  f.bundle.scene_id = id;
  f.bundle.duration = f.scene.duration;
  f.bundle.dims = cfg.feature_dims;
  f.bundle.video.values = gaussian(rng, frames, cfg.feature_dims.video);
  for (int t = 0; t < frames; ++t) f.bundle.video.times.push_back(t / 3.0);
  std::vector<LabelVector> all;
  for (int c = 0; c < chars; ++c) {
    CharacterAnnotation a;
    a.id = "c" + std::to_string(c);
    a.labels.resize(k);
    for (auto& v : a.labels) v = unit(rng) < 0.4;
    const int start = frames > 0 ? static_cast<int>(unit(rng) * frames) : 0;
    const int len = frames > 0 ? 1 + static_cast<int>(unit(rng) * (frames - start)) : 0;
    CharacterFeatures cf;
    cf.id = a.id;
    for (int t = start; t < start + len && t < frames; ++t) cf.frames.times.push_back(t / 3.0);
    cf.frames.values = gaussian(rng, static_cast<Eigen::Index>(cf.frames.times.size()), cfg.feature_dims.character);
    a.box_seconds = static_cast<double>(cf.frames.times.size()) / 3.0;
    all.push_back(a.labels);
    f.scene.characters.push_back(a);
    f.bundle.characters.push_back(std::move(cf));
  }
  for (int j = 0; j < utts; ++j) {
    const double t = unit(rng) * f.scene.duration;
    f.scene.utterances.push_back({id + "_u" + std::to_string(j), t});
    f.bundle.utterances.times.push_back(t);
  }
  std::sort(f.bundle.utterances.times.begin(), f.bundle.utterances.times.end());
  for (std::size_t j = 0; j < f.scene.utterances.size(); ++j) f.scene.utterances[j].mid_time = f.bundle.utterances.times[j];
  f.bundle.utterances.values = gaussian(rng, utts, cfg.feature_dims.dialog);
  if (all.empty()) {
    f.scene.scene_labels.assign(k, 0);
  } else {
    f.scene.scene_labels.assign(k, 0);
    for (const auto& v : all) {
      for (std::size_t i = 0; i < k; ++i) f.scene.scene_labels[i] |= v[i];
    }
  }
  return f;
}

inline std::vector<double> infer_times(double duration, int max_frames) {
  std::vector<double> t;
  for (int i = 0; i < std::min(static_cast<int>(std::ceil(duration * 3.0 - 1e-9)), max_frames); ++i) t.push_back(i / 3.0);
  return t;
}

/// AP from the definition: for each positive, the fraction of positives among
/// the items ranked at or above it. Item j ranks above i when its score is
/// larger, or equal with a smaller index.
inline double brute_force_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double sum = 0.0;
  int n_pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    ++n_pos;
    int above = 0;
    int above_pos = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool ahead = s[j] > s[i] || (s[j] == s[i] && j <= i);
      if (!ahead) continue;
      ++above;
      above_pos += y[j] ? 1 : 0;
    }
    sum += static_cast<double>(above_pos) / above;
  }
  return n_pos ? sum / n_pos : std::nan("");
}

/// Step-wise precision/recall area: sum over thresholds of (R_n - R_{n-1}) P_n.
/// Agrees with ranked precision when scores are distinct.
inline double recall_step_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::vector<double> thresholds = s;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double total_pos = 0.0;
  for (auto v : y) total_pos += v;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (double th : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] < th) continue;
      (y[i] ? tp : fp) += 1.0;
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

/// Column-wise any() over label vectors.
inline LabelVector brute_or(const std::vector<LabelVector>& rows) {
  LabelVector out(rows.front().size(), 0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    bool any = false;
    for (const auto& r : rows) any = any || r[k] == 1;
    out[k] = any ? 1 : 0;
  }
  return out;
}

/// Single-head attention without projections: softmax(x x^T / sqrt(d)) x over
/// unmasked keys, row `query`.
inline Eigen::RowVectorXd attention_average(const Eigen::MatrixXd& x, const std::vector<char>& mask, int query) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  std::vector<double> w(static_cast<std::size_t>(x.rows()), 0.0);
  double mx = -1e300;
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    if (mask[static_cast<std::size_t>(j)]) mx = std::max(mx, x.row(query).dot(x.row(j)) * scale);
  }
  double z = 0.0;
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    w[static_cast<std::size_t>(j)] = std::exp(x.row(query).dot(x.row(j)) * scale - mx);
    z += w[static_cast<std::size_t>(j)];
  }
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(x.cols());
  for (Eigen::Index j = 0; j < x.rows(); ++j) out += (w[static_cast<std::size_t>(j)] / z) * x.row(j);
  return out;
}

/// Sum of a row over character slots divided by the sum over video and
/// utterance slots, walking the role list once per role.
inline double role_partition_ratio(const Eigen::RowVectorXd& row, const std::vector<TokenTag>& roles) {
  double num = 0.0;
  for (std::size_t s = 0; s < roles.size(); ++s) {
    if (roles[s].role == TokenRole::kCharacter) num += row(static_cast<Eigen::Index>(s));
  }
  double video = 0.0;
  for (std::size_t s = 0; s < roles.size(); ++s) {
    if (roles[s].role == TokenRole::kVideo) video += row(static_cast<Eigen::Index>(s));
  }
  double utt = 0.0;
  for (std::size_t s = 0; s < roles.size(); ++s) {
    if (roles[s].role == TokenRole::kUtterance) utt += row(static_cast<Eigen::Index>(s));
  }
  return num / (video + utt);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("emotx_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace emotx::testing

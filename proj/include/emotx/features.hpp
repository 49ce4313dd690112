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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emotx/data_model.hpp"

namespace emotx {

/// Raw frame rate of every fixture.
inline constexpr double kFixtureFps = 3.0;

struct FeatureDims {
  int video = 64;
  int character = 64;
  int dialog = 64;

  bool operator==(const FeatureDims&) const = default;
};

/// Rows of features with one timestamp (seconds) per row.
struct TimedFeatures {
  std::vector<double> times;
  Eigen::MatrixXd values;

  std::size_t size() const { return times.size(); }
};

struct CharacterFeatures {
  std::string id;
  /// Only frames where the character's box exists.
  TimedFeatures frames;
};

struct FeatureBundle {
  std::string scene_id;
  double duration = 0.0;
  TimedFeatures video;
  /// Sorted by id.
  std::vector<CharacterFeatures> characters;
  /// Utterance features at their mid timestamps.
  TimedFeatures utterances;
  FeatureDims dims;

  const CharacterFeatures* find_character(std::string_view id) const;
};

/// Frame index of a timestamp on the fixture's 3 fps grid.
int frame_index(double t);

/// Reads `<root>/<scene_id>/{video,characters,utterances}.bin`. Throws IoError
/// for missing files and SchemaError for dim mismatches against `expected` or
/// timestamps outside [0, duration].
FeatureBundle load_bundle(const std::string& scene_id, const std::filesystem::path& feature_root,
                          const FeatureDims& expected);

void save_bundle(const FeatureBundle& bundle, const std::filesystem::path& feature_root);

struct SyntheticOptions {
  double min_duration = 2.0;
  double max_duration = 8.0;
  int max_characters = 4;
  /// Probability that a scene gets one character more than `max_characters`.
  double extra_character_rate = 0.1;
  /// Which modalities carry label signal; labels are dealt round-robin over
  /// the enabled ones in video, character, dialog order.
  bool signal_video = true;
  bool signal_character = true;
  bool signal_dialog = true;
  /// Norm of the label direction added at signal_strength = 1.
  double signal_amplitude = 3.0;
  double val_fraction = 0.25;
};

enum class Modality : std::uint8_t { kVideo = 0, kCharacter = 1, kDialog = 2 };

struct SyntheticData {
  Dataset dataset;
  std::vector<FeatureBundle> bundles;
  /// Modality whose features carry each label's signal.
  std::vector<Modality> label_modality;
};

/// Deterministic given the seed. Labels assigned to the character modality are
/// drawn per character; video and dialog labels are drawn per scene and shared
/// by the whole cast. For every positive label its direction, scaled by
/// `signal_strength * signal_amplitude`, is added to the assigned modality.
SyntheticData generate_synthetic(std::uint64_t seed, int n_scenes, const LabelSet& set,
                                 const FeatureDims& dims, double signal_strength,
                                 const SyntheticOptions& options = {});

/// Writes `<dir>/scenes.jsonl` and `<dir>/features/...`.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

/// Feature dims recorded in `<dir>/dataset.json`.
FeatureDims read_feature_dims(const std::filesystem::path& dataset_dir);

/// Loads bundles for every scene of a dataset written by write_synthetic.
std::vector<FeatureBundle> load_bundles(const Dataset& dataset,
                                        const std::filesystem::path& feature_root,
                                        const FeatureDims& expected);

}  // namespace emotx

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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace emotx {

/// Binary multi-label target, one entry per label of the active set.
using LabelVector = std::vector<std::uint8_t>;
/// Per-label probabilities in [0, 1].
using Probabilities = std::vector<double>;

enum class Level { kScene, kCharacter };

std::string_view to_string(Level level);
Level parse_level(std::string_view text);

/// Ordered label vocabulary (top10, top25 or emotic26). The emotic set also
/// carries the many-to-one map from raw free-text emotions to its groups.
class LabelSet {
 public:
  static LabelSet top10();
  static LabelSet top25();
  /// Built from the bundled mapping table.
  static LabelSet emotic26();
  /// top10, top25, emotic26, or top<K> for the K most frequent (K <= 25).
  static LabelSet named(std::string_view name);

  /// Parses a mapping table: one `group<TAB>raw, raw, ...` line per group,
  /// `#` comments allowed. Throws SchemaError on duplicate groups or a raw
  /// label claimed by two groups.
  static LabelSet from_mapping_table(std::string name, std::string_view text);

  const std::string& name() const { return name_; }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(std::size_t k) const { return labels_.at(k); }
  std::optional<std::size_t> index_of(std::string_view label) const;
  const std::map<std::string, std::size_t, std::less<>>& mapping() const { return mapping_; }

 private:
  LabelSet(std::string name, std::vector<std::string> labels,
           std::map<std::string, std::size_t, std::less<>> mapping);

  std::string name_;
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t, std::less<>> mapping_;
};

/// Raw text of the bundled emotic mapping table.
std::string_view bundled_emotic_mapping();

/// Group index for a raw emotion string, or nullopt when unmapped.
std::optional<std::size_t> map_to_emotic(std::string_view raw_label, const LabelSet& set);

struct CharacterAnnotation {
  std::string id;
  LabelVector labels;
  /// Seconds during which the character has a visible box.
  double box_seconds = 0.0;
};

struct Utterance {
  std::string text_id;
  double mid_time = 0.0;
};

struct SceneAnnotation {
  std::string scene_id;
  std::string split = "train";
  double duration = 0.0;
  std::vector<CharacterAnnotation> characters;
  std::vector<Utterance> utterances;
  LabelVector scene_labels;
};

struct Dataset {
  std::string label_set;
  std::vector<SceneAnnotation> scenes;

  std::vector<const SceneAnnotation*> split(std::string_view name) const;
};

/// Elementwise OR. Throws SchemaError on an empty list or length mismatch.
LabelVector derive_scene_labels(std::span<const LabelVector> char_labels);

/// Checks the annotation invariants against a label-set size.
void validate_scene(const SceneAnnotation& scene, std::size_t num_labels);

/// Keeps at most `max_characters`: most positive labels first, then most
/// box-seconds, then lexical id. Survivors keep their input order; scene labels
/// are re-derived from the kept cast.
SceneAnnotation truncate_characters(SceneAnnotation scene, std::size_t max_characters);

/// w_k = n_samples / n_pos(k), clipped to [1, 100]. Rows are scenes or
/// characters depending on `level`. Throws ConfigError naming a label with no
/// positives.
std::vector<double> compute_positive_weights(std::span<const SceneAnnotation> scenes,
                                             const LabelSet& set, Level level);

/// K x K counts of co-occurring positives, each row divided by its maximum.
/// Rows of labels that never occur stay zero.
Eigen::MatrixXd label_cooccurrence(std::span<const SceneAnnotation> scenes, std::size_t num_labels,
                                   Level level);

/// Number of positive labels per row -> number of rows with that count.
std::map<int, int> label_count_histogram(std::span<const SceneAnnotation> scenes, Level level);

/// Line-delimited JSON, one scene per line. Field names are listed in
/// docs/formats.md.
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace emotx

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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emotx/data_model.hpp"

namespace emotx {

/// Ranked-precision average precision: mean of precision@r over the ranks r
/// of the positives, scores sorted descending. Equal scores keep their input
/// order. Returns nullopt when there are no positives.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels);

struct MapResult {
  /// Mean over labels with at least one positive; nullopt if there are none.
  std::optional<double> map;
  std::vector<std::optional<double>> per_label;
  std::vector<int> positives;
};

/// Rows are samples (scenes or characters), columns labels.
MapResult mean_ap(std::span<const Probabilities> scores, std::span<const LabelVector> targets);

struct RandomBaseline {
  double mean = 0.0;
  double stddev = 0.0;
  /// Per-label AP averaged over trials.
  std::vector<std::optional<double>> per_label;
};

/// mAP of uniform [0, 1] scores, repeated `trials` times.
RandomBaseline random_baseline(std::span<const LabelVector> targets, int trials, std::uint64_t seed);

/// Tab-separated `label  ap  n_pos` rows and a final `mAP` row. Labels without
/// positives print `nan`.
void write_eval_table(const MapResult& result, const LabelSet& labels, const std::filesystem::path& path);

struct EvalRow {
  std::string label;
  std::optional<double> ap;
  int positives = 0;
};
std::vector<EvalRow> read_eval_table(const std::filesystem::path& path);

/// Builds `out_dir` from a run directory holding eval_scene.tsv,
/// eval_character.tsv and scenes.jsonl (plus expressiveness.tsv if present):
/// AP bars, co-occurrence heatmaps and label histograms as SVG with a TSV next
/// to each. Throws IoError listing every missing input.
void write_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

}  // namespace emotx

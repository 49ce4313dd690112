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
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emotx/config.hpp"
#include "emotx/data_model.hpp"
#include "emotx/evaluation.hpp"
#include "emotx/features.hpp"
#include "emotx/model.hpp"

namespace emotx {

enum class SampleMode { kTrain, kInfer };

/// One timestamp per 1/fps interval, up to min(ceil(fps * duration), T)
/// intervals. Train mode draws uniformly inside each interval; infer mode
/// takes each interval's start.
std::vector<double> sample_frame_times(double duration, int max_frames, SampleMode mode,
                                       std::uint64_t seed, double fps = kFixtureFps);

/// Reduce-on-plateau for a metric that should increase.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience, double min_delta);

  /// Records one epoch's metric and returns the learning rate for the next.
  double step(double metric);
  double lr() const { return lr_; }
  int reductions() const { return reductions_; }

 private:
  double lr_;
  double factor_;
  int patience_;
  double min_delta_;
  double best_;
  int bad_epochs_ = 0;
  int reductions_ = 0;
};

class Adam {
 public:
  explicit Adam(const ParamStore& like, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamStore& params, const ParamStore& grads, double lr);

 private:
  ParamStore m_;
  ParamStore v_;
  double beta1_;
  double beta2_;
  double eps_;
  long step_ = 0;
};

/// Index of the largest sqrt(scene_map * char_map); ties go to the earliest.
std::size_t select_checkpoint(std::span<const std::pair<double, double>> history);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  double scene_map = 0.0;
  double char_map = 0.0;
  double selection = 0.0;
};

struct TrainResult {
  Model best;
  int best_epoch = 0;
  std::vector<EpochMetrics> history;
};

struct TrainHooks {
  /// Called after each epoch; returning true stops training.
  std::function<bool(const EpochMetrics&)> on_epoch;
  /// Receives one line per epoch.
  std::ostream* log = nullptr;
};

/// Scenes paired with their feature bundles (same order as the dataset).
struct SceneBatchSource {
  const Dataset* dataset = nullptr;
  std::span<const FeatureBundle> bundles;
};

/// Throws NumericError with a dump of the offending batch on a non-finite loss.
TrainResult train(const SceneBatchSource& data, const ModelConfig& model_config, const TrainConfig& config,
                  const TrainHooks& hooks = {});

struct ScenePrediction {
  std::string scene_id;
  Prediction prediction;
  /// Ids of the kept characters, aligned with prediction.characters.
  std::vector<std::string> character_ids;
};

/// Fixed-frame inference over the scenes of `split` (every scene when empty).
/// Throws ConfigError if the dataset's label set differs from the model's.
std::vector<ScenePrediction> infer(const Model& model, const SceneBatchSource& data, const std::string& split,
                                   const DroppedModalities& drop = {});

struct LevelTables {
  std::vector<Probabilities> scores;
  std::vector<LabelVector> targets;
};

/// Flattens predictions and annotations into per-level rows. Characters
/// without a prediction are left out.
LevelTables level_tables(const std::vector<ScenePrediction>& predictions, const Dataset& dataset, Level level,
                         std::size_t max_characters);

/// The annotation a model sees: at most N characters.
SceneAnnotation prepared_scene(const SceneAnnotation& scene, const ModelConfig& config);

/// Writes one TSV row per scene and per character: `scene_id  target  p_0 ... p_{K-1}`.
void write_predictions(const std::vector<ScenePrediction>& predictions, const std::filesystem::path& path);

}  // namespace emotx

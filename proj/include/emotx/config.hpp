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
#include <string>
#include <string_view>

#include "emotx/features.hpp"

namespace emotx {

enum class ModelKind { kEmoTx, kSingleTx, kMlp };
/// Per-emotion: K classifier tokens per target. Single: one token per target.
enum class ClsMode { kPerEmotion, kSingle };

std::string_view to_string(ModelKind kind);
std::string_view to_string(ClsMode mode);
ModelKind parse_model_kind(std::string_view text);
ClsMode parse_cls_mode(std::string_view text);

struct DroppedModalities {
  bool video = false;
  bool character = false;
  bool dialog = false;

  bool any() const { return video || character || dialog; }
  bool operator==(const DroppedModalities&) const = default;
};

/// Comma-separated subset of {video, character, dialog}; empty or "none" drops nothing.
DroppedModalities parse_dropped(std::string_view text);
std::string to_string(const DroppedModalities& drop);

struct ModelConfig {
  ModelKind model = ModelKind::kEmoTx;
  ClsMode cls_mode = ClsMode::kPerEmotion;
  std::string label_set = "top25";
  int num_labels = 25;      // K
  int max_characters = 4;   // N
  int max_frames = 300;     // T
  double tau = 1.0 / 3.0;   // time bin step, seconds
  double max_duration = 100.0;  // T*, seconds
  int model_dim = 64;       // D
  FeatureDims feature_dims;
  int layers = 2;
  int heads = 8;
  int ffn_dim = 0;          // 0 selects 4 * model_dim
  double dropout = 0.1;
  bool projection_bias = true;

  int ffn_width() const { return ffn_dim > 0 ? ffn_dim : 4 * model_dim; }
  /// ceil(T* / tau) + 1 rows, so the t = 0 bin fits.
  int time_bins() const;
  /// Classifier tokens per target (scene or one character).
  int cls_tokens() const { return cls_mode == ClsMode::kSingle ? 1 : num_labels; }
  /// Slots of the padded EmoTx sequence: C + T + N (C + T) + T.
  int max_tokens() const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 5e-5;
  int batch_size = 8;
  int epochs = 50;
  int patience = 3;
  double min_delta = 1e-4;
  double lr_factor = 0.1;
  std::uint64_t seed = 0;
  DroppedModalities drop;
  std::string train_split = "train";
  std::string val_split = "val";
};

/// Flat `key = value` text; `#` starts a comment. Values may be written as
/// fractions (`1/3`).
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(std::string_view key) const { return values_.count(std::string(key)) != 0; }
  std::string get(std::string_view key, std::string fallback) const;
  double get(std::string_view key, double fallback) const;
  int get(std::string_view key, int fallback) const;
  bool get(std::string_view key, bool fallback) const;
  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Overlays known keys onto the given configs. Unknown keys throw ConfigError.
  void apply(ModelConfig& model, TrainConfig& train) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace emotx

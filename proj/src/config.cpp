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

#include "emotx/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "emotx/data_model.hpp"
#include "emotx/error.hpp"

namespace emotx {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double parse_number(const std::string& key, const std::string& text) {
  try {
    const auto slash = text.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
    const double num = std::stod(text.substr(0, slash));
    const double den = std::stod(text.substr(slash + 1));
    return num / den;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: " + text);
  }
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kEmoTx: return "emotx";
    case ModelKind::kSingleTx: return "single-tx";
    case ModelKind::kMlp: return "mlp";
  }
  return "emotx";
}

std::string_view to_string(ClsMode mode) {
  return mode == ClsMode::kSingle ? "single" : "per-emotion";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "emotx" || text == "emotx-1cls") return ModelKind::kEmoTx;
  if (text == "single-tx") return ModelKind::kSingleTx;
  if (text == "mlp") return ModelKind::kMlp;
  throw ConfigError("unknown model '" + std::string(text) + "'");
}

ClsMode parse_cls_mode(std::string_view text) {
  if (text == "per-emotion") return ClsMode::kPerEmotion;
  if (text == "single") return ClsMode::kSingle;
  throw ConfigError("unknown cls mode '" + std::string(text) + "'");
}

DroppedModalities parse_dropped(std::string_view text) {
  DroppedModalities drop;
  std::istringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty() || item == "none") continue;
    if (item == "video") {
      drop.video = true;
    } else if (item == "character" || item == "char") {
      drop.character = true;
    } else if (item == "dialog" || item == "utterance") {
      drop.dialog = true;
    } else {
      throw ConfigError("unknown modality '" + item + "'");
    }
  }
  return drop;
}

std::string to_string(const DroppedModalities& drop) {
  std::string out;
  auto append = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  append(drop.video, "video");
  append(drop.character, "character");
  append(drop.dialog, "dialog");
  return out.empty() ? "none" : out;
}

int ModelConfig::time_bins() const {
  return static_cast<int>(std::ceil(max_duration / tau - 1e-9)) + 1;
}

int ModelConfig::max_tokens() const {
  const int c = cls_tokens();
  return c + max_frames + max_characters * (c + max_frames) + max_frames;
}

void ModelConfig::validate() const {
  if (num_labels < 1) throw ConfigError("K must be positive");
  if (max_characters < 1) throw ConfigError("N must be positive");
  if (max_frames < 0) throw ConfigError("T must be non-negative");
  if (!(tau > 0.0) || !(max_duration > 0.0)) throw ConfigError("tau and T_star must be positive");
  if (model_dim < 1) throw ConfigError("D must be positive");
  if (heads < 1 || model_dim % heads != 0) throw ConfigError("D must be divisible by heads");
  if (model == ModelKind::kEmoTx && layers < 1) throw ConfigError("EmoTx needs H >= 1 layers");
  if (layers < 0) throw ConfigError("layers must be non-negative");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (feature_dims.video < 1 || feature_dims.character < 1 || feature_dims.dialog < 1) {
    throw ConfigError("feature dims must be positive");
  }
  if (LabelSet::named(label_set).size() != static_cast<std::size_t>(num_labels)) {
    throw ConfigError("K=" + std::to_string(num_labels) + " does not match label set " + label_set);
  }
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string KeyValueConfig::get(std::string_view key, std::string fallback) const {
  const auto it = values_.find(std::string(key));
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get(std::string_view key, double fallback) const {
  const auto it = values_.find(std::string(key));
  return it == values_.end() ? fallback : parse_number(it->first, it->second);
}

int KeyValueConfig::get(std::string_view key, int fallback) const {
  const auto it = values_.find(std::string(key));
  if (it == values_.end()) return fallback;
  const double v = parse_number(it->first, it->second);
  if (v != std::floor(v)) throw ConfigError("config key '" + it->first + "' must be an integer");
  return static_cast<int>(v);
}

bool KeyValueConfig::get(std::string_view key, bool fallback) const {
  const auto it = values_.find(std::string(key));
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no") return false;
  throw ConfigError("config key '" + it->first + "' must be a boolean");
}

void KeyValueConfig::apply(ModelConfig& m, TrainConfig& t) const {
  static const std::set<std::string> known = {
      "model", "cls_mode", "label_set", "K", "N", "T", "tau", "T_star", "D", "D_V", "D_C", "D_U",
      "layers", "heads", "ffn_dim", "dropout", "projection_bias", "lr", "batch_size", "epochs",
      "patience", "min_delta", "lr_factor", "seed", "drop_modality", "train_split", "val_split"};
  for (const auto& [key, value] : values_) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  if (has("model")) {
    const std::string model = get("model", std::string());
    m.model = parse_model_kind(model);
    if (model == "emotx-1cls") m.cls_mode = ClsMode::kSingle;
  }
  if (has("cls_mode")) m.cls_mode = parse_cls_mode(get("cls_mode", std::string()));
  if (has("label_set")) {
    m.label_set = get("label_set", m.label_set);
    m.num_labels = static_cast<int>(LabelSet::named(m.label_set).size());
  }
  m.num_labels = get("K", m.num_labels);
  m.max_characters = get("N", m.max_characters);
  m.max_frames = get("T", m.max_frames);
  m.tau = get("tau", m.tau);
  m.max_duration = get("T_star", m.max_duration);
  m.model_dim = get("D", m.model_dim);
  m.feature_dims.video = get("D_V", m.feature_dims.video);
  m.feature_dims.character = get("D_C", m.feature_dims.character);
  m.feature_dims.dialog = get("D_U", m.feature_dims.dialog);
  m.layers = get("layers", m.layers);
  m.heads = get("heads", m.heads);
  m.ffn_dim = get("ffn_dim", m.ffn_dim);
  m.dropout = get("dropout", m.dropout);
  m.projection_bias = get("projection_bias", m.projection_bias);
  t.learning_rate = get("lr", t.learning_rate);
  t.batch_size = get("batch_size", t.batch_size);
  t.epochs = get("epochs", t.epochs);
  t.patience = get("patience", t.patience);
  t.min_delta = get("min_delta", t.min_delta);
  t.lr_factor = get("lr_factor", t.lr_factor);
  t.seed = static_cast<std::uint64_t>(get("seed", static_cast<int>(t.seed)));
  if (has("drop_modality")) t.drop = parse_dropped(get("drop_modality", std::string()));
  t.train_split = get("train_split", t.train_split);
  t.val_split = get("val_split", t.val_split);
}

}  // namespace emotx

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

#include "emotx/data_model.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "emotx/error.hpp"

namespace emotx {

namespace {

const std::vector<std::string> kTop10 = {"worried", "calm",  "curious",  "serious", "happy",
                                         "confused", "excited", "surprise", "angry",  "friendly"};

// Top-10 first so the top-25 set contains it.
const std::vector<std::string> kTop25 = {
    "worried", "calm",   "curious",  "serious", "happy",    "confused", "excited",
    "surprise", "angry", "friendly", "polite",  "honest",   "determined", "helpful",
    "alarmed", "annoyed", "confident", "cheerful", "scared", "sad",      "nervous",
    "amused",  "upset",  "quiet",    "shocked"};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

int count_positives(const LabelVector& v) {
  return static_cast<int>(std::count(v.begin(), v.end(), std::uint8_t{1}));
}

// Rows over which statistics are taken at a level.
std::vector<const LabelVector*> label_rows(std::span<const SceneAnnotation> scenes, Level level) {
  std::vector<const LabelVector*> rows;
  for (const auto& scene : scenes) {
    if (level == Level::kScene) {
      rows.push_back(&scene.scene_labels);
    } else {
      for (const auto& c : scene.characters) rows.push_back(&c.labels);
    }
  }
  return rows;
}

LabelVector read_label_vector(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": label vector must be an array");
  LabelVector v;
  v.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_number_integer() || (e.get<int>() != 0 && e.get<int>() != 1)) {
      throw SchemaError(where + ": label entries must be 0 or 1");
    }
    v.push_back(static_cast<std::uint8_t>(e.get<int>()));
  }
  return v;
}

template <typename T>
T require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(where + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

std::string_view to_string(Level level) {
  return level == Level::kScene ? "scene" : "character";
}

Level parse_level(std::string_view text) {
  if (text == "scene") return Level::kScene;
  if (text == "character" || text == "char") return Level::kCharacter;
  throw InputError("unknown level '" + std::string(text) + "'");
}

LabelSet::LabelSet(std::string name, std::vector<std::string> labels,
                   std::map<std::string, std::size_t, std::less<>> mapping)
    : name_(std::move(name)), labels_(std::move(labels)), mapping_(std::move(mapping)) {
  std::set<std::string_view> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) throw SchemaError("duplicate label '" + l + "' in " + name_);
  }
  for (const auto& [raw, idx] : mapping_) {
    if (idx >= labels_.size()) throw SchemaError("mapping for '" + raw + "' out of range");
  }
}

LabelSet LabelSet::top10() { return LabelSet("top10", kTop10, {}); }
LabelSet LabelSet::top25() { return LabelSet("top25", kTop25, {}); }

LabelSet LabelSet::emotic26() {
  static const LabelSet set = from_mapping_table("emotic26", bundled_emotic_mapping());
  return set;
}

LabelSet LabelSet::named(std::string_view name) {
  if (name == "top10") return top10();
  if (name == "top25") return top25();
  if (name == "emotic26" || name == "emotic") return emotic26();
  if (name.size() > 3 && name.substr(0, 3) == "top") {
    const std::string digits(name.substr(3));
    if (digits.find_first_not_of("0123456789") == std::string::npos && digits.size() <= 2) {
      const int k = std::stoi(digits);
      if (k >= 1 && k <= static_cast<int>(kTop25.size())) {
        return LabelSet("top" + std::to_string(k), std::vector<std::string>(kTop25.begin(), kTop25.begin() + k), {});
      }
    }
  }
  throw ConfigError("unknown label set '" + std::string(name) + "'");
}

LabelSet LabelSet::from_mapping_table(std::string name, std::string_view text) {
  std::vector<std::string> groups;
  std::map<std::string, std::size_t, std::less<>> mapping;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto tab = stripped.find('\t');
    if (tab == std::string::npos) {
      throw SchemaError("mapping line " + std::to_string(line_no) + ": expected group<TAB>labels");
    }
    const std::string group = trim(std::string_view(stripped).substr(0, tab));
    if (std::find(groups.begin(), groups.end(), group) != groups.end()) {
      throw SchemaError("mapping line " + std::to_string(line_no) + ": duplicate group " + group);
    }
    const std::size_t index = groups.size();
    groups.push_back(group);
    std::istringstream raws(stripped.substr(tab + 1));
    std::string raw;
    while (std::getline(raws, raw, ',')) {
      raw = trim(raw);
      if (raw.empty()) continue;
      if (!mapping.emplace(raw, index).second) {
        throw SchemaError("raw label '" + raw + "' mapped to more than one group");
      }
    }
  }
  return LabelSet(std::move(name), std::move(groups), std::move(mapping));
}

std::optional<std::size_t> LabelSet::index_of(std::string_view label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::optional<std::size_t> map_to_emotic(std::string_view raw_label, const LabelSet& set) {
  const auto it = set.mapping().find(raw_label);
  if (it == set.mapping().end()) {
    std::clog << "emotic mapping: no group for '" << raw_label << "'\n";
    return std::nullopt;
  }
  return it->second;
}

std::vector<const SceneAnnotation*> Dataset::split(std::string_view name) const {
  std::vector<const SceneAnnotation*> out;
  for (const auto& s : scenes) {
    if (s.split == name) out.push_back(&s);
  }
  return out;
}

LabelVector derive_scene_labels(std::span<const LabelVector> char_labels) {
  if (char_labels.empty()) throw SchemaError("derive_scene_labels: no character labels");
  LabelVector out(char_labels.front().size(), 0);
  for (const auto& v : char_labels) {
    if (v.size() != out.size()) throw SchemaError("derive_scene_labels: label length mismatch");
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = static_cast<std::uint8_t>(out[k] | v[k]);
  }
  return out;
}

void validate_scene(const SceneAnnotation& scene, std::size_t num_labels) {
  const std::string where = "scene '" + scene.scene_id + "'";
  if (scene.scene_id.empty()) throw SchemaError("scene with empty id");
  if (!(scene.duration > 0.0)) throw SchemaError(where + ": duration must be positive");
  if (scene.scene_labels.size() != num_labels) {
    throw SchemaError(where + ": scene label length " + std::to_string(scene.scene_labels.size()) +
                      " != " + std::to_string(num_labels));
  }
  std::set<std::string_view> ids;
  std::vector<LabelVector> chars;
  for (const auto& c : scene.characters) {
    if (!ids.insert(c.id).second) throw SchemaError(where + ": duplicate character " + c.id);
    if (c.labels.size() != num_labels) throw SchemaError(where + ": character label length");
    if (c.box_seconds < 0.0) throw SchemaError(where + ": negative box_seconds");
    chars.push_back(c.labels);
  }
  for (const auto& u : scene.utterances) {
    if (u.mid_time < 0.0 || u.mid_time > scene.duration) {
      throw SchemaError(where + ": utterance " + u.text_id + " outside [0, duration]");
    }
  }
  const LabelVector expected =
      chars.empty() ? LabelVector(num_labels, 0) : derive_scene_labels(chars);
  if (expected != scene.scene_labels) {
    throw SchemaError(where + ": scene labels are not the OR of character labels");
  }
}

SceneAnnotation truncate_characters(SceneAnnotation scene, std::size_t max_characters) {
  if (scene.characters.size() <= max_characters) return scene;
  std::vector<std::size_t> rank(scene.characters.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t i, std::size_t j) {
    const auto& a = scene.characters[i];
    const auto& b = scene.characters[j];
    const int pa = count_positives(a.labels);
    const int pb = count_positives(b.labels);
    if (pa != pb) return pa > pb;
    if (a.box_seconds != b.box_seconds) return a.box_seconds > b.box_seconds;
    return a.id < b.id;
  });
  // Survivors keep their original order.
  rank.resize(max_characters);
  std::sort(rank.begin(), rank.end());
  std::vector<CharacterAnnotation> survivors;
  for (std::size_t i : rank) survivors.push_back(std::move(scene.characters[i]));
  scene.characters = std::move(survivors);
  std::vector<LabelVector> kept;
  for (const auto& c : scene.characters) kept.push_back(c.labels);
  if (!kept.empty()) scene.scene_labels = derive_scene_labels(kept);
  return scene;
}

std::vector<double> compute_positive_weights(std::span<const SceneAnnotation> scenes,
                                             const LabelSet& set, Level level) {
  const auto rows = label_rows(scenes, level);
  const std::size_t k_count = set.size();
  std::vector<long> positives(k_count, 0);
  for (const LabelVector* row : rows) {
    if (row->size() != k_count) throw SchemaError("compute_positive_weights: label length mismatch");
    for (std::size_t k = 0; k < k_count; ++k) positives[k] += (*row)[k];
  }
  std::vector<double> weights(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (positives[k] == 0) {
      throw ConfigError("label '" + set.label(k) + "' has no positive " +
                        std::string(to_string(level)) + " samples");
    }
    const double w = static_cast<double>(rows.size()) / static_cast<double>(positives[k]);
    weights[k] = std::clamp(w, 1.0, 100.0);
  }
  return weights;
}

Eigen::MatrixXd label_cooccurrence(std::span<const SceneAnnotation> scenes, std::size_t num_labels,
                                   Level level) {
  if (scenes.empty()) throw InputError("label_cooccurrence: empty dataset");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(num_labels, num_labels);
  std::vector<std::size_t> active;
  for (const LabelVector* row : label_rows(scenes, level)) {
    if (row->size() != num_labels) throw SchemaError("label_cooccurrence: label length mismatch");
    active.clear();
    for (std::size_t k = 0; k < num_labels; ++k) {
      if ((*row)[k]) active.push_back(k);
    }
    for (std::size_t a : active) {
      for (std::size_t b : active) counts(a, b) += 1.0;
    }
  }
  for (Eigen::Index a = 0; a < counts.rows(); ++a) {
    const double row_max = counts.row(a).maxCoeff();
    if (row_max > 0.0) counts.row(a) /= row_max;
  }
  return counts;
}

std::map<int, int> label_count_histogram(std::span<const SceneAnnotation> scenes, Level level) {
  std::map<int, int> hist;
  for (const LabelVector* row : label_rows(scenes, level)) ++hist[count_positives(*row)];
  return hist;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  Dataset dataset;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(where + ": " + e.what());
    }
    const auto label_set = require<std::string>(j, "label_set", where);
    if (dataset.label_set.empty()) {
      dataset.label_set = label_set;
    } else if (dataset.label_set != label_set) {
      throw SchemaError(where + ": mixed label sets in one dataset");
    }
    SceneAnnotation scene;
    scene.scene_id = require<std::string>(j, "scene_id", where);
    scene.split = j.value("split", std::string("train"));
    scene.duration = require<double>(j, "duration", where);
    for (const auto& c : j.value("characters", nlohmann::json::array())) {
      CharacterAnnotation ch;
      ch.id = require<std::string>(c, "id", where);
      ch.labels = read_label_vector(c.at("labels"), where);
      ch.box_seconds = c.value("box_seconds", 0.0);
      scene.characters.push_back(std::move(ch));
    }
    for (const auto& u : j.value("utterances", nlohmann::json::array())) {
      scene.utterances.push_back(
          {require<std::string>(u, "text_id", where), require<double>(u, "mid_time", where)});
    }
    scene.scene_labels = read_label_vector(j.at("scene_labels"), where);
    validate_scene(scene, LabelSet::named(label_set).size());
    dataset.scenes.push_back(std::move(scene));
  }
  return dataset;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset " + path.string());
  for (const auto& scene : dataset.scenes) {
    nlohmann::json j;
    j["scene_id"] = scene.scene_id;
    j["label_set"] = dataset.label_set;
    j["split"] = scene.split;
    j["duration"] = scene.duration;
    j["characters"] = nlohmann::json::array();
    for (const auto& c : scene.characters) {
      j["characters"].push_back({{"id", c.id}, {"labels", c.labels}, {"box_seconds", c.box_seconds}});
    }
    j["utterances"] = nlohmann::json::array();
    for (const auto& u : scene.utterances) {
      j["utterances"].push_back({{"text_id", u.text_id}, {"mid_time", u.mid_time}});
    }
    j["scene_labels"] = scene.scene_labels;
    out << j.dump() << '\n';
  }
}

}  // namespace emotx

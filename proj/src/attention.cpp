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

#include "emotx/attention.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "emotx/error.hpp"

namespace emotx {

namespace {

int find_cls_slot(const std::vector<TokenTag>& roles, int character, int k) {
  int fallback = -1;
  for (std::size_t s = 0; s < roles.size(); ++s) {
    const TokenTag& t = roles[s];
    const bool target = character < 0 ? t.role == TokenRole::kSceneCls
                                      : t.role == TokenRole::kCharCls && t.character == character;
    if (!target) continue;
    if (t.label == k) return static_cast<int>(s);
    if (fallback < 0) fallback = static_cast<int>(s);
  }
  // Single-token mode has only label 0.
  bool single = fallback >= 0;
  for (const TokenTag& t : roles) {
    if (t.role == TokenRole::kSceneCls && t.label > 0) single = false;
  }
  if (single) return fallback;
  if (character >= 0) throw InputError("no classifier token for character " + std::to_string(character));
  throw InputError("no scene classifier token for emotion " + std::to_string(k));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RoleMass role_mass(const Eigen::Ref<const Eigen::RowVectorXd>& row, const std::vector<TokenTag>& roles) {
  if (static_cast<std::size_t>(row.size()) != roles.size()) throw InputError("role_mass: row length mismatch");
  RoleMass m;
  for (std::size_t s = 0; s < roles.size(); ++s) {
    const double a = row(static_cast<Eigen::Index>(s));
    switch (roles[s].role) {
      case TokenRole::kVideo: m.video += a; break;
      case TokenRole::kCharacter: m.character += a; break;
      case TokenRole::kUtterance: m.dialog += a; break;
      case TokenRole::kSceneCls:
      case TokenRole::kCharCls: m.cls += a; break;
      case TokenRole::kPad: m.pad += a; break;
    }
  }
  return m;
}

std::optional<double> expressiveness_of_row(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                            const std::vector<TokenTag>& roles) {
  const RoleMass m = role_mass(row, roles);
  const double denom = m.video + m.dialog;
  if (denom <= 0.0) return std::nullopt;
  return m.character / denom;
}

std::optional<double> expressiveness(const AttentionRecord& attention, const std::vector<TokenTag>& roles, int k,
                                     AttentionSelect select) {
  const Matrix mean = attention.reduce(select.layer, select.head);
  const int slot = find_cls_slot(roles, -1, k);
  return expressiveness_of_row(mean.row(slot), roles);
}

std::vector<ProfileEntry> expressiveness_profile(const Model& model, const SceneBatchSource& data,
                                                 const std::string& split, const AttentionProvider& provider,
                                                 AttentionSelect select) {
  const Dataset& dataset = *data.dataset;
  const LabelSet labels = LabelSet::named(model.config.label_set);
  const std::size_t k_count = labels.size();
  std::vector<double> sum(k_count, 0.0);
  std::vector<int> count(k_count, 0);
  for (std::size_t idx = 0; idx < dataset.scenes.size(); ++idx) {
    if (!split.empty() && dataset.scenes[idx].split != split) continue;
    const SceneAnnotation scene = prepared_scene(dataset.scenes[idx], model.config);
    const FeatureBundle& bundle = data.bundles[idx];
    const auto times = sample_frame_times(scene.duration, model.config.max_frames, SampleMode::kInfer, 0);
    const TokenLayout layout = plan_tokens(bundle, scene, times, model.config);
    AttentionRecord record;
    if (provider) {
      record = provider(bundle, layout);
    } else {
      predict_scene(model, bundle, layout, &record);
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      if (!scene.scene_labels[k]) continue;
      const auto e = expressiveness(record, layout.tags, static_cast<int>(k), select);
      if (!e) continue;
      sum[k] += *e;
      ++count[k];
    }
  }
  std::vector<ProfileEntry> out;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (count[k] > 0) out.push_back({labels.label(k), sum[k] / count[k], count[k]});
  }
  std::stable_sort(out.begin(), out.end(), [](const ProfileEntry& a, const ProfileEntry& b) { return a.mean > b.mean; });
  return out;
}

std::vector<TimelineRow> attention_timeline(const AttentionRecord& attention, const std::vector<TokenTag>& roles,
                                            int character, int k, AttentionSelect select) {
  if (character >= 0) {
    const bool known = std::any_of(roles.begin(), roles.end(), [&](const TokenTag& t) {
      return t.role == TokenRole::kCharCls && t.character == character;
    });
    if (!known) throw InputError("unknown character index " + std::to_string(character));
  }
  const Matrix mean = attention.reduce(select.layer, select.head);
  const int slot = find_cls_slot(roles, character, k);
  std::map<std::pair<std::string, int>, double> grouped;
  for (std::size_t s = 0; s < roles.size(); ++s) {
    const TokenTag& t = roles[s];
    std::string role;
    int bin = t.time_bin;
    switch (t.role) {
      case TokenRole::kVideo: role = "video"; break;
      case TokenRole::kCharacter: role = "character:" + std::to_string(t.character); break;
      case TokenRole::kUtterance: role = "dialog"; break;
      case TokenRole::kSceneCls:
      case TokenRole::kCharCls: role = "cls"; bin = -1; break;
      case TokenRole::kPad: role = "pad"; bin = -1; break;
    }
    grouped[{role, bin}] += mean(slot, static_cast<Eigen::Index>(s));
  }
  std::vector<TimelineRow> rows;
  for (const auto& [key, mass] : grouped) rows.push_back({key.second, key.first, mass});
  std::stable_sort(rows.begin(), rows.end(), [](const TimelineRow& a, const TimelineRow& b) { return a.bin < b.bin; });
  return rows;
}

void write_timeline(const std::vector<TimelineRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "bin\trole\tmass\n";
  for (const auto& r : rows) out << r.bin << '\t' << r.role << '\t' << fmt(r.mass) << '\n';
}

void write_profile(const std::vector<ProfileEntry>& profile, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "label\tmean\tcount\n";
  for (const auto& e : profile) out << e.label << '\t' << fmt(e.mean) << '\t' << e.count << '\n';
}

}  // namespace emotx

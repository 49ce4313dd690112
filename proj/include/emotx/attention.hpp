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

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emotx/model.hpp"
#include "emotx/tokens.hpp"
#include "emotx/train.hpp"

namespace emotx {

/// Attention mass of one row split by the role of the attended token.
struct RoleMass {
  double video = 0.0;
  double character = 0.0;
  double dialog = 0.0;
  double cls = 0.0;
  double pad = 0.0;

  double total() const { return video + character + dialog + cls + pad; }
};

RoleMass role_mass(const Eigen::Ref<const Eigen::RowVectorXd>& row, const std::vector<TokenTag>& roles);

/// character / (video + dialog) for one attention row; classifier tokens are
/// in neither part. nullopt when the denominator is zero.
std::optional<double> expressiveness_of_row(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                            const std::vector<TokenTag>& roles);

/// Which captured matrix the analytics read: layer -1 is the final layer,
/// head -1 the mean over heads.
struct AttentionSelect {
  int layer = -1;
  int head = -1;
};

/// Expressiveness of the scene classifier token for emotion k. In
/// single-token mode every k reads the one token.
std::optional<double> expressiveness(const AttentionRecord& attention, const std::vector<TokenTag>& roles, int k,
                                     AttentionSelect select = {});

struct ProfileEntry {
  std::string label;
  double mean = 0.0;
  int count = 0;
};

/// Supplies the attention record for one scene and its layout.
using AttentionProvider = std::function<AttentionRecord(const FeatureBundle&, const TokenLayout&)>;

/// Mean e_k over scenes with y_k = 1, sorted by decreasing mean (ties by label
/// index). Labels that are never positive, or never defined, are left out.
/// Without a provider the model's own attention is captured.
std::vector<ProfileEntry> expressiveness_profile(const Model& model, const SceneBatchSource& data,
                                                 const std::string& split, const AttentionProvider& provider = {},
                                                 AttentionSelect select = {});

struct TimelineRow {
  int bin = -1;
  std::string role;
  double mass = 0.0;
};

/// Mass of one classifier-token row grouped by (role, time bin). Roles are
/// `video`, `character:<i>`, `dialog`, `cls` (bin -1) and `pad` (bin -1).
/// `character` < 0 selects the scene token. Throws InputError for an unknown
/// character slot.
std::vector<TimelineRow> attention_timeline(const AttentionRecord& attention, const std::vector<TokenTag>& roles,
                                            int character, int k, AttentionSelect select = {});

void write_timeline(const std::vector<TimelineRow>& rows, const std::filesystem::path& path);
void write_profile(const std::vector<ProfileEntry>& profile, const std::filesystem::path& path);

}  // namespace emotx

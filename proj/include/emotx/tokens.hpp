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
#include <random>
#include <span>
#include <vector>

#include "emotx/config.hpp"
#include "emotx/data_model.hpp"
#include "emotx/features.hpp"
#include "emotx/graph.hpp"
#include "emotx/params.hpp"

namespace emotx {

enum class TokenRole : std::uint8_t { kPad, kSceneCls, kCharCls, kVideo, kCharacter, kUtterance };

struct TokenTag {
  TokenRole role = TokenRole::kPad;
  /// Emotion index of a classifier token (0 in single-token mode).
  int label = -1;
  /// Character slot for character classifier and box tokens.
  int character = -1;
  /// Position within the modality: sampled frame t or utterance j.
  int index = -1;
  int time_bin = -1;

  bool operator==(const TokenTag&) const = default;
};

/// Which slot holds which token, before any parameters are applied.
///
/// Slot order: C scene classifier tokens, T video tokens, then for each of
/// the N characters C classifier tokens followed by T box tokens, then T
/// utterance tokens. Unused slots are padding.
struct TokenLayout {
  std::vector<TokenTag> tags;
  std::vector<char> mask;
  /// Feature row feeding each video/character/utterance slot, else -1.
  std::vector<int> source;
  int cls_tokens = 0;
  int max_frames = 0;
  int present_characters = 0;
  /// Index into FeatureBundle::characters per character slot, -1 if absent.
  std::vector<int> character_source;

  std::size_t size() const { return tags.size(); }
  std::size_t real_count() const;
  int scene_cls_slot(int c) const { return c; }
  int char_cls_slot(int character, int c) const {
    return cls_tokens + max_frames + character * (cls_tokens + max_frames) + c;
  }
};

/// Encoder input: one row per slot, padded rows are zero with mask = false.
struct TokenSequence {
  Matrix tokens;
  std::vector<char> mask;
  std::vector<TokenTag> roles;

  std::size_t real_count() const;
};

/// ceil(t / tau) clamped to [0, table_size - 1]. Throws InputError for t < 0.
int time_bin(double t, double tau, int table_size);

/// Throws InputError when the scene has more than N characters, more than T
/// sampled frames or more than T utterances. Dropped modalities produce
/// padding in place of their tokens; classifier tokens are always kept for
/// present characters.
TokenLayout plan_tokens(const FeatureBundle& bundle, const SceneAnnotation& scene,
                        std::span<const double> sampled_times, const ModelConfig& config,
                        const DroppedModalities& drop = {});

/// Registers projections, embedding tables, classifier tokens and the token
/// LayerNorm. Matrices use uniform(+-1/sqrt(fan_in)) init, tables
/// uniform(+-1/sqrt(D)).
void add_token_params(ParamStore& store, const ModelConfig& config, std::mt19937_64& rng);

/// Differentiable token construction for a planned layout.
ag::Var embed_tokens(ag::Graph& graph, const ParamStore& params, const ModelConfig& config,
                     const TokenLayout& layout, const FeatureBundle& bundle);

TokenSequence assemble(const FeatureBundle& bundle, const SceneAnnotation& scene,
                       std::span<const double> sampled_times, const ParamStore& params,
                       const ModelConfig& config);

/// Turns every token of a dropped modality into padding.
TokenSequence modality_mask(TokenSequence seq, const DroppedModalities& drop);

/// Uniform(-bound, bound) matrix.
Matrix uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double bound);

}  // namespace emotx

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

#include <random>

#include "emotx/graph.hpp"
#include "emotx/model.hpp"

namespace emotx {

// Comparison models. Both reuse the feature projections and the token layout
// but none of the modality, character or time embeddings.

void add_mlp_params(ParamStore& store, const ModelConfig& config, std::mt19937_64& rng);
void add_single_tx_params(ParamStore& store, const ModelConfig& config, std::mt19937_64& rng);

/// Element-wise max over the projected video and utterance rows (scene), as 1 x D.
ag::Var mlp_scene_pool(ag::Graph& graph, const ParamStore& params, const ModelConfig& config,
                       const TokenLayout& layout, const FeatureBundle& bundle);
/// Element-wise max over one character's projected box rows; invalid Var when
/// the character has no tokens.
ag::Var mlp_character_pool(ag::Graph& graph, const ParamStore& params, const ModelConfig& config,
                           const TokenLayout& layout, const FeatureBundle& bundle, int character);

/// Max-pooled features through two linear layers (hidden width D, ReLU).
ForwardOutput mlp_forward(ag::Graph& graph, const Model& model, const FeatureBundle& bundle,
                          const TokenLayout& layout, const ForwardOptions& options);

/// One classifier token attending over feature tokens. The scene pass sees
/// every modality; each character pass sees only that character's boxes.
ForwardOutput single_tx_forward(ag::Graph& graph, const Model& model, const FeatureBundle& bundle,
                                const TokenLayout& layout, const ForwardOptions& options);

/// Contextualized scene classifier output of the single-token encoder (1 x D).
Matrix single_tx_scene_cls(const Model& model, const FeatureBundle& bundle, const TokenLayout& layout,
                           int extra_padding);

}  // namespace emotx

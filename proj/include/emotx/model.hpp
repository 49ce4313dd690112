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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "emotx/config.hpp"
#include "emotx/data_model.hpp"
#include "emotx/features.hpp"
#include "emotx/graph.hpp"
#include "emotx/params.hpp"
#include "emotx/tokens.hpp"

namespace emotx {

/// Softmax attention captured per layer and head; each matrix is L x L with
/// exact zeros in masked columns.
struct AttentionRecord {
  std::vector<std::vector<Matrix>> layers;

  /// Final layer averaged over heads.
  Matrix final_layer_mean() const;
  /// One layer (negative counts from the end) and one head, or the mean over
  /// heads when `head` < 0.
  Matrix reduce(int layer, int head) const;
};

struct EncoderSettings {
  int layers = 2;
  int heads = 8;
  double dropout = 0.0;
  bool train = false;
  std::mt19937_64* rng = nullptr;
  AttentionRecord* capture = nullptr;
};

/// Pre-norm blocks: x += MHA(LN(x)); x += FFN(LN(x)), GELU feed-forward,
/// final LayerNorm. Zero layers is the identity.
void add_encoder_params(ParamStore& store, const std::string& prefix, int layers, int dim,
                        int ffn_dim, std::mt19937_64& rng);

/// Keys with mask = false receive zero attention, so padded rows cannot
/// influence real ones. Throws InputError if every key is masked.
ag::Var encoder_forward(ag::Graph& graph, const ParamStore& params, const std::string& prefix,
                        ag::Var tokens, const std::vector<char>& mask,
                        const EncoderSettings& settings);

struct Model {
  ModelConfig config;
  ParamStore params;
};

/// Validates the config and draws every parameter for its model kind.
Model init_model(const ModelConfig& config, std::uint64_t seed);

struct ForwardOptions {
  bool train = false;
  std::mt19937_64* rng = nullptr;
  AttentionRecord* attention = nullptr;
  /// Extra masked zero tokens appended to every encoder input.
  int extra_padding = 0;
};

/// K x 1 logits per target. Characters that are absent (or carry no usable
/// tokens for a pooling baseline) hold an invalid Var.
struct ForwardOutput {
  ag::Var scene_logits;
  std::vector<ag::Var> char_logits;
};

ForwardOutput forward(ag::Graph& graph, const Model& model, const FeatureBundle& bundle,
                      const TokenLayout& layout, const ForwardOptions& options = {});

/// Scene terms plus terms of every present character with a prediction.
ag::Var loss_terms(ag::Graph& graph, const ForwardOutput& out, const SceneAnnotation& scene,
                   std::span<const double> scene_weights, std::span<const double> char_weights);

/// Contextualized classifier-token outputs (C x D per target).
struct ClsOutputs {
  Matrix scene;
  std::vector<std::optional<Matrix>> characters;
};

struct Encoded {
  ClsOutputs cls;
  std::optional<AttentionRecord> attention;
};

/// Runs the EmoTx encoder over an assembled sequence in inference mode.
Encoded encode(const TokenSequence& seq, const Model& model, bool capture_attention);

struct Prediction {
  Probabilities scene;
  std::vector<std::optional<Probabilities>> characters;
};

/// Per-emotion mode: p_k = sigmoid(W_k . z_k + b_k) with the same head for the
/// scene and every character. Single mode maps the one token to all K logits.
Prediction predict(const ClsOutputs& cls, const Matrix& head_weight, const Matrix& head_bias,
                   ClsMode mode);

/// sum_k BCE(w_k, y_k, p_k) over the scene and each character that has a
/// prediction, with BCE(w, y, p) = -[w y log p + (1 - y) log(1 - p)] and p
/// clamped to [1e-7, 1 - 1e-7].
double weighted_bce_loss(const Prediction& prediction, const LabelVector& scene_targets,
                         std::span<const LabelVector> char_targets,
                         std::span<const double> scene_weights, std::span<const double> char_weights);

/// Plain (non-graph) probabilities for one scene.
Prediction predict_scene(const Model& model, const FeatureBundle& bundle, const TokenLayout& layout,
                         AttentionRecord* attention = nullptr);

/// Versioned binary container of config, label set and all tensors.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
/// As load_checkpoint, but throws ConfigError if the stored variant differs.
Model load_checkpoint(const std::filesystem::path& path, ModelKind kind, ClsMode cls_mode);

}  // namespace emotx

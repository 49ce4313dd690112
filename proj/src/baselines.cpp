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

#include "emotx/baselines.hpp"

#include <cmath>

#include "emotx/error.hpp"

namespace emotx {

namespace {

void add_projections(ParamStore& store, const ModelConfig& config, std::mt19937_64& rng) {
  const std::pair<const char*, int> projections[] = {{"video", config.feature_dims.video},
                                                     {"character", config.feature_dims.character},
                                                     {"dialog", config.feature_dims.dialog}};
  for (const auto& [name, in_dim] : projections) {
    store.add(std::string("proj.") + name + ".weight",
              uniform_matrix(rng, config.model_dim, in_dim, 1.0 / std::sqrt(static_cast<double>(in_dim))));
    if (config.projection_bias) store.add(std::string("proj.") + name + ".bias", Matrix::Zero(1, config.model_dim));
  }
}

void add_dense(ParamStore& store, const std::string& name, int out, int in, std::mt19937_64& rng,
               bool column_bias) {
  store.add(name + ".weight", uniform_matrix(rng, out, in, 1.0 / std::sqrt(static_cast<double>(in))));
  store.add(name + ".bias", column_bias ? Matrix::Zero(out, 1) : Matrix::Zero(1, out));
}

ag::Var project(ag::Graph& graph, const ParamStore& params, const ModelConfig& config,
                const std::string& name, Matrix features) {
  const ag::Var x = graph.constant(std::move(features));
  const ag::Var w = graph.param(params, "proj." + name + ".weight");
  if (config.projection_bias) return graph.linear(x, w, graph.param(params, "proj." + name + ".bias"));
  return graph.linear(x, w);
}

struct Rows {
  std::vector<int> video;
  std::vector<int> dialog;
  std::vector<std::vector<int>> character;  // per character slot
};

Rows feature_rows(const TokenLayout& layout) {
  Rows rows;
  rows.character.resize(static_cast<std::size_t>(layout.present_characters));
  for (std::size_t s = 0; s < layout.size(); ++s) {
    if (!layout.mask[s]) continue;
    const TokenTag& tag = layout.tags[s];
    if (tag.role == TokenRole::kVideo) rows.video.push_back(layout.source[s]);
    if (tag.role == TokenRole::kUtterance) rows.dialog.push_back(layout.source[s]);
    if (tag.role == TokenRole::kCharacter) {
      rows.character[static_cast<std::size_t>(tag.character)].push_back(layout.source[s]);
    }
  }
  return rows;
}

Matrix select_rows(const Matrix& values, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
  return out;
}

const Matrix& character_values(const TokenLayout& layout, const FeatureBundle& bundle, int character) {
  const int src = layout.character_source.at(static_cast<std::size_t>(character));
  if (src < 0) throw InputError("character slot has no features");
  return bundle.characters[static_cast<std::size_t>(src)].frames.values;
}

// Projected (video, character, dialog) token blocks that are present.
std::vector<ag::Var> projected_blocks(ag::Graph& graph, const ParamStore& params, const ModelConfig& config,
                                      const TokenLayout& layout, const FeatureBundle& bundle,
                                      const Rows& rows, int only_character) {
  std::vector<ag::Var> blocks;
  if (only_character < 0) {
    if (!rows.video.empty()) {
      blocks.push_back(project(graph, params, config, "video", select_rows(bundle.video.values, rows.video)));
    }
    for (int i = 0; i < layout.present_characters; ++i) {
      const auto& r = rows.character[static_cast<std::size_t>(i)];
      if (r.empty()) continue;
      blocks.push_back(project(graph, params, config, "character", select_rows(character_values(layout, bundle, i), r)));
    }
    if (!rows.dialog.empty()) {
      blocks.push_back(project(graph, params, config, "dialog", select_rows(bundle.utterances.values, rows.dialog)));
    }
  } else {
    const auto& r = rows.character[static_cast<std::size_t>(only_character)];
    if (!r.empty()) {
      blocks.push_back(project(graph, params, config, "character",
                               select_rows(character_values(layout, bundle, only_character), r)));
    }
  }
  return blocks;
}

ag::Var mlp_head(ag::Graph& graph, const ParamStore& params, const std::string& prefix, ag::Var pooled) {
  const ag::Var hidden = graph.relu(graph.linear(pooled, graph.param(params, prefix + ".fc1.weight"),
                                                 graph.param(params, prefix + ".fc1.bias")));
  const ag::Var logits = graph.linear(hidden, graph.param(params, prefix + ".fc2.weight"),
                                      graph.param(params, prefix + ".fc2.bias"));
  return graph.transpose(logits);
}

// Encoder output at the classifier row of [cls; tokens; padding].
ag::Var single_tx_cls(ag::Graph& graph, const Model& model, const std::string& cls_name,
                      std::vector<ag::Var> blocks, const ForwardOptions& options) {
  const ModelConfig& cfg = model.config;
  const ParamStore& params = model.params;
  std::vector<ag::Var> parts = {graph.param(params, cls_name)};
  if (!blocks.empty()) {
    const ag::Var feats = graph.concat_rows(blocks);
    parts.push_back(graph.layer_norm(feats, graph.param(params, "token_norm.gamma"),
                                     graph.param(params, "token_norm.beta")));
  }
  if (options.extra_padding > 0) parts.push_back(graph.constant(Matrix::Zero(options.extra_padding, cfg.model_dim)));
  const ag::Var x = graph.concat_rows(parts);
  std::vector<char> mask(static_cast<std::size_t>(x.rows()), 1);
  std::fill(mask.end() - options.extra_padding, mask.end(), char{0});
  const EncoderSettings settings{cfg.layers, cfg.heads, cfg.dropout, options.train, options.rng, nullptr};
  const ag::Var z = encoder_forward(graph, params, "encoder", x, mask, settings);
  return graph.gather_rows(z, {0});
}

ag::Var single_tx_logits(ag::Graph& graph, const ParamStore& params, const std::string& head, ag::Var cls) {
  return graph.add(graph.matmul_nt(graph.param(params, head + ".weight"), cls), graph.param(params, head + ".bias"));
}

}  // namespace

void add_mlp_params(ParamStore& store, const ModelConfig& config, std::mt19937_64& rng) {
  add_projections(store, config, rng);
  const int d = config.model_dim;
  for (const char* branch : {"mlp.scene", "mlp.character"}) {
    add_dense(store, std::string(branch) + ".fc1", d, d, rng, false);
    add_dense(store, std::string(branch) + ".fc2", config.num_labels, d, rng, false);
  }
}

void add_single_tx_params(ParamStore& store, const ModelConfig& config, std::mt19937_64& rng) {
  const int d = config.model_dim;
  add_projections(store, config, rng);
  store.add("token_norm.gamma", Matrix::Ones(1, d));
  store.add("token_norm.beta", Matrix::Zero(1, d));
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  store.add("stx.cls.scene", uniform_matrix(rng, 1, d, bound));
  store.add("stx.cls.character", uniform_matrix(rng, 1, d, bound));
  add_encoder_params(store, "encoder", config.layers, d, config.ffn_width(), rng);
  add_dense(store, "head.scene", config.num_labels, d, rng, true);
  add_dense(store, "head.character", config.num_labels, d, rng, true);
}

ag::Var mlp_scene_pool(ag::Graph& graph, const ParamStore& params, const ModelConfig& config,
                       const TokenLayout& layout, const FeatureBundle& bundle) {
  const Rows rows = feature_rows(layout);
  std::vector<ag::Var> blocks;
  if (!rows.video.empty()) {
    blocks.push_back(project(graph, params, config, "video", select_rows(bundle.video.values, rows.video)));
  }
  if (!rows.dialog.empty()) {
    blocks.push_back(project(graph, params, config, "dialog", select_rows(bundle.utterances.values, rows.dialog)));
  }
  if (blocks.empty()) return graph.constant(Matrix::Zero(1, config.model_dim));
  return graph.col_max(graph.concat_rows(blocks));
}

ag::Var mlp_character_pool(ag::Graph& graph, const ParamStore& params, const ModelConfig& config,
                           const TokenLayout& layout, const FeatureBundle& bundle, int character) {
  const Rows rows = feature_rows(layout);
  const auto& r = rows.character.at(static_cast<std::size_t>(character));
  if (r.empty()) return {};
  return graph.col_max(
      project(graph, params, config, "character", select_rows(character_values(layout, bundle, character), r)));
}

ForwardOutput mlp_forward(ag::Graph& graph, const Model& model, const FeatureBundle& bundle,
                          const TokenLayout& layout, const ForwardOptions&) {
  ForwardOutput out;
  out.scene_logits =
      mlp_head(graph, model.params, "mlp.scene", mlp_scene_pool(graph, model.params, model.config, layout, bundle));
  for (int i = 0; i < layout.present_characters; ++i) {
    const ag::Var pooled = mlp_character_pool(graph, model.params, model.config, layout, bundle, i);
    out.char_logits.push_back(pooled.valid() ? mlp_head(graph, model.params, "mlp.character", pooled) : ag::Var{});
  }
  return out;
}

ForwardOutput single_tx_forward(ag::Graph& graph, const Model& model, const FeatureBundle& bundle,
                                const TokenLayout& layout, const ForwardOptions& options) {
  const Rows rows = feature_rows(layout);
  ForwardOutput out;
  const ag::Var scene =
      single_tx_cls(graph, model, "stx.cls.scene",
                    projected_blocks(graph, model.params, model.config, layout, bundle, rows, -1), options);
  out.scene_logits = single_tx_logits(graph, model.params, "head.scene", scene);
  for (int i = 0; i < layout.present_characters; ++i) {
    const ag::Var cls =
        single_tx_cls(graph, model, "stx.cls.character",
                      projected_blocks(graph, model.params, model.config, layout, bundle, rows, i), options);
    out.char_logits.push_back(single_tx_logits(graph, model.params, "head.character", cls));
  }
  return out;
}

Matrix single_tx_scene_cls(const Model& model, const FeatureBundle& bundle, const TokenLayout& layout,
                           int extra_padding) {
  ag::Graph graph;
  ForwardOptions options;
  options.extra_padding = extra_padding;
  const Rows rows = feature_rows(layout);
  return single_tx_cls(graph, model, "stx.cls.scene",
                       projected_blocks(graph, model.params, model.config, layout, bundle, rows, -1), options)
      .value();
}

}  // namespace emotx

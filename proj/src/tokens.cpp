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

#include "emotx/tokens.hpp"

#include <algorithm>
#include <cmath>

#include "emotx/error.hpp"

namespace emotx {

namespace {

int modality_row(TokenRole role) {
  switch (role) {
    case TokenRole::kSceneCls:
    case TokenRole::kVideo: return 0;
    case TokenRole::kCharCls:
    case TokenRole::kCharacter: return 1;
    case TokenRole::kUtterance: return 2;
    case TokenRole::kPad: break;
  }
  throw InputError("padding has no modality");
}

// Rows of `values` selected by `rows`, as a constant feature block.
Matrix select_rows(const Matrix& values, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
  return out;
}

ag::Var project(ag::Graph& graph, const ParamStore& params, const ModelConfig& config,
                const std::string& name, Matrix features) {
  ag::Var x = graph.constant(std::move(features));
  ag::Var w = graph.param(params, "proj." + name + ".weight");
  if (config.projection_bias) return graph.linear(x, w, graph.param(params, "proj." + name + ".bias"));
  return graph.linear(x, w);
}

// Table with a trailing zero row; index rows() of the original selects zero.
ag::Var with_zero_row(ag::Graph& graph, ag::Var table) {
  const ag::Var parts[] = {table, graph.constant(Matrix::Zero(1, table.cols()))};
  return graph.concat_rows(parts);
}

}  // namespace

std::size_t TokenLayout::real_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), char{1}));
}

std::size_t TokenSequence::real_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), char{1}));
}

int time_bin(double t, double tau, int table_size) {
  if (t < 0.0) throw InputError("time_bin: negative timestamp");
  if (!(tau > 0.0) || table_size < 1) throw InputError("time_bin: bad table");
  const double x = t / tau;
  // Absorb rounding so exact multiples of tau (10 s / (1/3 s)) stay put.
  const double bin = std::ceil(x - 1e-9 * std::max(1.0, x));
  return static_cast<int>(std::clamp(bin, 0.0, static_cast<double>(table_size - 1)));
}

TokenLayout plan_tokens(const FeatureBundle& bundle, const SceneAnnotation& scene,
                        std::span<const double> sampled_times, const ModelConfig& config,
                        const DroppedModalities& drop) {
  const int c_count = config.cls_tokens();
  const int t_max = config.max_frames;
  const int n_max = config.max_characters;
  const int bins = config.time_bins();
  if (static_cast<int>(scene.characters.size()) > n_max) {
    throw InputError("scene '" + scene.scene_id + "' has more than N=" + std::to_string(n_max) +
                     " characters");
  }
  if (static_cast<int>(sampled_times.size()) > t_max) {
    throw InputError("scene '" + scene.scene_id + "': more than T sampled frames");
  }
  if (static_cast<int>(bundle.utterances.size()) > t_max) {
    throw InputError("scene '" + scene.scene_id + "': more than T utterances");
  }

  TokenLayout layout;
  layout.cls_tokens = c_count;
  layout.max_frames = t_max;
  layout.present_characters = static_cast<int>(scene.characters.size());
  layout.character_source.assign(scene.characters.size(), -1);
  const auto total = static_cast<std::size_t>(config.max_tokens());
  layout.tags.assign(total, TokenTag{});
  layout.mask.assign(total, 0);
  layout.source.assign(total, -1);

  auto place = [&](std::size_t slot, TokenTag tag, int source) {
    layout.tags[slot] = tag;
    layout.mask[slot] = 1;
    layout.source[slot] = source;
  };

  for (int c = 0; c < c_count; ++c) place(static_cast<std::size_t>(c), {TokenRole::kSceneCls, c, -1, -1, -1}, -1);

  const auto video_base = static_cast<std::size_t>(c_count);
  if (!drop.video && bundle.video.size() > 0) {
    const int last = static_cast<int>(bundle.video.size()) - 1;
    for (std::size_t t = 0; t < sampled_times.size(); ++t) {
      const int row = std::clamp(frame_index(sampled_times[t]), 0, last);
      place(video_base + t,
            {TokenRole::kVideo, -1, -1, static_cast<int>(t), time_bin(sampled_times[t], config.tau, bins)},
            row);
    }
  }

  for (int i = 0; i < layout.present_characters; ++i) {
    const auto cls_base = static_cast<std::size_t>(layout.char_cls_slot(i, 0));
    for (int c = 0; c < c_count; ++c) place(cls_base + static_cast<std::size_t>(c), {TokenRole::kCharCls, c, i, -1, -1}, -1);
    if (drop.character) continue;
    const CharacterFeatures* feats = bundle.find_character(scene.characters[static_cast<std::size_t>(i)].id);
    if (feats == nullptr) continue;
    layout.character_source[static_cast<std::size_t>(i)] =
        static_cast<int>(feats - bundle.characters.data());
    const auto frame_base = cls_base + static_cast<std::size_t>(c_count);
    std::size_t row = 0;
    for (std::size_t t = 0; t < sampled_times.size(); ++t) {
      const int frame = frame_index(sampled_times[t]);
      while (row < feats->frames.size() && frame_index(feats->frames.times[row]) < frame) ++row;
      if (row < feats->frames.size() && frame_index(feats->frames.times[row]) == frame) {
        place(frame_base + t,
              {TokenRole::kCharacter, -1, i, static_cast<int>(t), time_bin(sampled_times[t], config.tau, bins)},
              static_cast<int>(row));
      }
    }
  }

  if (!drop.dialog) {
    const auto utt_base = static_cast<std::size_t>(c_count + t_max + n_max * (c_count + t_max));
    for (std::size_t j = 0; j < bundle.utterances.size(); ++j) {
      place(utt_base + j,
            {TokenRole::kUtterance, -1, -1, static_cast<int>(j),
             time_bin(bundle.utterances.times[j], config.tau, bins)},
            static_cast<int>(j));
    }
  }
  return layout;
}

Matrix uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  }
  return m;
}

void add_token_params(ParamStore& store, const ModelConfig& config, std::mt19937_64& rng) {
  const int d = config.model_dim;
  const double table_bound = 1.0 / std::sqrt(static_cast<double>(d));
  const std::pair<const char*, int> projections[] = {{"video", config.feature_dims.video},
                                                     {"character", config.feature_dims.character},
                                                     {"dialog", config.feature_dims.dialog}};
  for (const auto& [name, in_dim] : projections) {
    store.add(std::string("proj.") + name + ".weight",
              uniform_matrix(rng, d, in_dim, 1.0 / std::sqrt(static_cast<double>(in_dim))));
    if (config.projection_bias) store.add(std::string("proj.") + name + ".bias", Matrix::Zero(1, d));
  }
  store.add("embed.modality", uniform_matrix(rng, 3, d, table_bound));
  store.add("embed.character", uniform_matrix(rng, config.max_characters, d, table_bound));
  store.add("embed.time", uniform_matrix(rng, config.time_bins(), d, table_bound));
  store.add("cls.scene", uniform_matrix(rng, config.cls_tokens(), d, table_bound));
  store.add("cls.character",
            uniform_matrix(rng, config.max_characters * config.cls_tokens(), d, table_bound));
  store.add("token_norm.gamma", Matrix::Ones(1, d));
  store.add("token_norm.beta", Matrix::Zero(1, d));
}

ag::Var embed_tokens(ag::Graph& graph, const ParamStore& params, const ModelConfig& config,
                     const TokenLayout& layout, const FeatureBundle& bundle) {
  const int c_count = config.cls_tokens();
  const int n_max = config.max_characters;

  // Feature rows per modality in slot order.
  std::vector<int> video_rows;
  std::vector<int> utt_rows;
  std::vector<std::pair<int, int>> char_rows;  // (character, row)
  for (std::size_t s = 0; s < layout.size(); ++s) {
    if (!layout.mask[s]) continue;
    const TokenTag& tag = layout.tags[s];
    if (tag.role == TokenRole::kVideo) video_rows.push_back(layout.source[s]);
    if (tag.role == TokenRole::kUtterance) utt_rows.push_back(layout.source[s]);
    if (tag.role == TokenRole::kCharacter) char_rows.emplace_back(tag.character, layout.source[s]);
  }

  // Stack every content block; each real slot then picks one row of it.
  std::vector<ag::Var> blocks = {graph.param(params, "cls.scene"), graph.param(params, "cls.character")};
  const int char_cls_offset = c_count;
  int offset = c_count + n_max * c_count;
  const int video_offset = offset;
  if (!video_rows.empty()) {
    blocks.push_back(project(graph, params, config, "video", select_rows(bundle.video.values, video_rows)));
    offset += static_cast<int>(video_rows.size());
  }
  const int char_offset = offset;
  if (!char_rows.empty()) {
    Matrix feats(static_cast<Eigen::Index>(char_rows.size()), bundle.dims.character);
    for (std::size_t r = 0; r < char_rows.size(); ++r) {
      const auto& [slot_char, row] = char_rows[r];
      const auto& frames = bundle.characters[static_cast<std::size_t>(
          layout.character_source[static_cast<std::size_t>(slot_char)])].frames;
      feats.row(static_cast<Eigen::Index>(r)) = frames.values.row(row);
    }
    blocks.push_back(project(graph, params, config, "character", std::move(feats)));
    offset += static_cast<int>(char_rows.size());
  }
  const int utt_offset = offset;
  if (!utt_rows.empty()) {
    blocks.push_back(project(graph, params, config, "dialog", select_rows(bundle.utterances.values, utt_rows)));
  }
  const ag::Var stacked = graph.concat_rows(blocks);

  std::vector<int> content;
  std::vector<int> modality;
  std::vector<int> character;
  std::vector<int> time;
  std::vector<int> slot_to_real(layout.size(), -1);
  int video_i = 0;
  int char_i = 0;
  int utt_i = 0;
  const int time_zero = config.time_bins();
  for (std::size_t s = 0; s < layout.size(); ++s) {
    if (!layout.mask[s]) continue;
    const TokenTag& tag = layout.tags[s];
    slot_to_real[s] = static_cast<int>(content.size());
    modality.push_back(modality_row(tag.role));
    character.push_back(tag.character >= 0 ? tag.character : n_max);
    time.push_back(tag.time_bin >= 0 ? tag.time_bin : time_zero);
    switch (tag.role) {
      case TokenRole::kSceneCls: content.push_back(tag.label); break;
      case TokenRole::kCharCls: content.push_back(char_cls_offset + tag.character * c_count + tag.label); break;
      case TokenRole::kVideo: content.push_back(video_offset + video_i++); break;
      case TokenRole::kCharacter: content.push_back(char_offset + char_i++); break;
      case TokenRole::kUtterance: content.push_back(utt_offset + utt_i++); break;
      case TokenRole::kPad: break;
    }
  }

  ag::Var tokens = graph.gather_rows(stacked, std::move(content));
  tokens = graph.add(tokens, graph.gather_rows(graph.param(params, "embed.modality"), std::move(modality)));
  tokens = graph.add(tokens, graph.gather_rows(with_zero_row(graph, graph.param(params, "embed.character")),
                                               std::move(character)));
  tokens = graph.add(tokens, graph.gather_rows(with_zero_row(graph, graph.param(params, "embed.time")),
                                               std::move(time)));
  tokens = graph.layer_norm(tokens, graph.param(params, "token_norm.gamma"),
                            graph.param(params, "token_norm.beta"));

  // Scatter into slots; padding selects the trailing zero row.
  const int zero_row = static_cast<int>(tokens.rows());
  for (int& r : slot_to_real) {
    if (r < 0) r = zero_row;
  }
  return graph.gather_rows(with_zero_row(graph, tokens), std::move(slot_to_real));
}

TokenSequence assemble(const FeatureBundle& bundle, const SceneAnnotation& scene,
                       std::span<const double> sampled_times, const ParamStore& params,
                       const ModelConfig& config) {
  const TokenLayout layout = plan_tokens(bundle, scene, sampled_times, config);
  ag::Graph graph;
  const ag::Var tokens = embed_tokens(graph, params, config, layout, bundle);
  return {tokens.value(), layout.mask, layout.tags};
}

TokenSequence modality_mask(TokenSequence seq, const DroppedModalities& drop) {
  for (std::size_t s = 0; s < seq.roles.size(); ++s) {
    const TokenRole role = seq.roles[s].role;
    const bool dropped = (drop.video && role == TokenRole::kVideo) ||
                         (drop.character && role == TokenRole::kCharacter) ||
                         (drop.dialog && role == TokenRole::kUtterance);
    if (!dropped) continue;
    seq.roles[s] = TokenTag{};
    seq.mask[s] = 0;
    seq.tokens.row(static_cast<Eigen::Index>(s)).setZero();
  }
  return seq;
}

}  // namespace emotx

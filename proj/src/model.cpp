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

#include "emotx/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "emotx/baselines.hpp"
#include "emotx/error.hpp"

namespace emotx {

namespace {

constexpr char kCheckpointMagic[8] = {'E', 'M', 'T', 'X', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ag::Var dropout(ag::Graph& graph, ag::Var x, const EncoderSettings& s) {
  if (!s.train || s.dropout <= 0.0) return x;
  if (s.rng == nullptr) throw InputError("dropout in training mode needs an rng");
  std::bernoulli_distribution keep(1.0 - s.dropout);
  Matrix m(x.rows(), x.cols());
  const double scale = 1.0 / (1.0 - s.dropout);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = keep(*s.rng) ? scale : 0.0;
  }
  return graph.mul_const(x, std::move(m));
}

ag::Var dense(ag::Graph& graph, const ParamStore& params, const std::string& name, ag::Var x) {
  return graph.linear(x, graph.param(params, name + ".weight"), graph.param(params, name + ".bias"));
}

void add_dense(ParamStore& store, const std::string& name, int out, int in, std::mt19937_64& rng) {
  store.add(name + ".weight", uniform_matrix(rng, out, in, 1.0 / std::sqrt(static_cast<double>(in))));
  store.add(name + ".bias", Matrix::Zero(1, out));
}

void add_norm(ParamStore& store, const std::string& name, int dim) {
  store.add(name + ".gamma", Matrix::Ones(1, dim));
  store.add(name + ".beta", Matrix::Zero(1, dim));
}

ag::Var norm(ag::Graph& graph, const ParamStore& params, const std::string& name, ag::Var x) {
  return graph.layer_norm(x, graph.param(params, name + ".gamma"), graph.param(params, name + ".beta"));
}

// Head logits for C stacked classifier outputs, as K x 1.
ag::Var head_logits(ag::Graph& graph, const ParamStore& params, ClsMode mode, ag::Var cls) {
  const ag::Var w = graph.param(params, "head.weight");
  const ag::Var b = graph.param(params, "head.bias");
  if (mode == ClsMode::kSingle) return graph.add(graph.matmul_nt(w, cls), b);
  return graph.add(graph.rowwise_dot(cls, w), b);
}

std::vector<int> cls_slots(const TokenLayout& layout, int character) {
  std::vector<int> slots;
  for (int c = 0; c < layout.cls_tokens; ++c) {
    slots.push_back(character < 0 ? layout.scene_cls_slot(c) : layout.char_cls_slot(character, c));
  }
  return slots;
}

ForwardOutput emotx_forward(ag::Graph& graph, const Model& model, const FeatureBundle& bundle,
                            const TokenLayout& layout, const ForwardOptions& options) {
  const ModelConfig& cfg = model.config;
  ag::Var tokens = embed_tokens(graph, model.params, cfg, layout, bundle);

  // Padding cannot influence real rows, so only real slots (plus any extra
  // padding requested) are run through the encoder.
  std::vector<int> real;
  std::vector<int> compact(layout.size(), -1);
  for (std::size_t s = 0; s < layout.size(); ++s) {
    if (!layout.mask[s]) continue;
    compact[s] = static_cast<int>(real.size());
    real.push_back(static_cast<int>(s));
  }
  std::vector<char> mask(real.size(), 1);
  ag::Var x = graph.gather_rows(tokens, real);
  if (options.extra_padding > 0) {
    const ag::Var parts[] = {x, graph.constant(Matrix::Zero(options.extra_padding, x.cols()))};
    x = graph.concat_rows(parts);
    mask.resize(mask.size() + static_cast<std::size_t>(options.extra_padding), 0);
  }

  AttentionRecord compact_record;
  EncoderSettings settings{cfg.layers, cfg.heads, cfg.dropout, options.train, options.rng,
                           options.attention ? &compact_record : nullptr};
  const ag::Var z = encoder_forward(graph, model.params, "encoder", x, mask, settings);

  if (options.attention) {
    // Expand to full slot coordinates; padded rows and columns stay zero.
    options.attention->layers.clear();
    const auto full = static_cast<Eigen::Index>(layout.size());
    for (const auto& layer : compact_record.layers) {
      auto& out = options.attention->layers.emplace_back();
      for (const Matrix& a : layer) {
        Matrix m = Matrix::Zero(full, full);
        for (std::size_t i = 0; i < real.size(); ++i) {
          for (std::size_t j = 0; j < real.size(); ++j) {
            m(real[i], real[j]) = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          }
        }
        out.push_back(std::move(m));
      }
    }
  }

  auto tap = [&](int character) {
    std::vector<int> rows;
    for (int s : cls_slots(layout, character)) rows.push_back(compact[static_cast<std::size_t>(s)]);
    return head_logits(graph, model.params, cfg.cls_mode, graph.gather_rows(z, std::move(rows)));
  };
  ForwardOutput out;
  out.scene_logits = tap(-1);
  for (int i = 0; i < layout.present_characters; ++i) out.char_logits.push_back(tap(i));
  return out;
}

Probabilities to_probabilities(const Matrix& logits) {
  Probabilities p(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index k = 0; k < logits.size(); ++k) p[static_cast<std::size_t>(k)] = sigmoid(logits(k));
  return p;
}

Matrix column(std::span<const double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

Matrix column(const LabelVector& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

double bce_term(double w, double y, double p) {
  const double pc = std::clamp(p, 1e-7, 1.0 - 1e-7);
  return -(w * y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"model", to_string(c.model)},
          {"cls_mode", to_string(c.cls_mode)},
          {"label_set", c.label_set},
          {"K", c.num_labels},
          {"N", c.max_characters},
          {"T", c.max_frames},
          {"tau", c.tau},
          {"T_star", c.max_duration},
          {"D", c.model_dim},
          {"D_V", c.feature_dims.video},
          {"D_C", c.feature_dims.character},
          {"D_U", c.feature_dims.dialog},
          {"layers", c.layers},
          {"heads", c.heads},
          {"ffn_dim", c.ffn_dim},
          {"dropout", c.dropout},
          {"projection_bias", c.projection_bias}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.model = parse_model_kind(j.at("model").get<std::string>());
  c.cls_mode = parse_cls_mode(j.at("cls_mode").get<std::string>());
  c.label_set = j.at("label_set").get<std::string>();
  c.num_labels = j.at("K").get<int>();
  c.max_characters = j.at("N").get<int>();
  c.max_frames = j.at("T").get<int>();
  c.tau = j.at("tau").get<double>();
  c.max_duration = j.at("T_star").get<double>();
  c.model_dim = j.at("D").get<int>();
  c.feature_dims.video = j.at("D_V").get<int>();
  c.feature_dims.character = j.at("D_C").get<int>();
  c.feature_dims.dialog = j.at("D_U").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.projection_bias = j.at("projection_bias").get<bool>();
  return c;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint: " + what);
  return v;
}

std::string read_string(std::istream& in, std::uint64_t size, const std::string& what) {
  if (size > (1ull << 32)) throw IoError("corrupt checkpoint: " + what);
  std::string s(size, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(size))) throw IoError("truncated checkpoint: " + what);
  return s;
}

}  // namespace

Matrix AttentionRecord::final_layer_mean() const { return reduce(-1, -1); }

Matrix AttentionRecord::reduce(int layer, int head) const {
  const int n = static_cast<int>(layers.size());
  const int l = layer < 0 ? n + layer : layer;
  if (l < 0 || l >= n || layers[static_cast<std::size_t>(l)].empty()) {
    throw InputError("attention record has no layer " + std::to_string(layer));
  }
  const auto& heads = layers[static_cast<std::size_t>(l)];
  if (head >= static_cast<int>(heads.size())) throw InputError("attention record has no head " + std::to_string(head));
  if (head >= 0) return heads[static_cast<std::size_t>(head)];
  Matrix mean = Matrix::Zero(heads.front().rows(), heads.front().cols());
  for (const Matrix& a : heads) mean += a;
  return mean / static_cast<double>(heads.size());
}

void add_encoder_params(ParamStore& store, const std::string& prefix, int layers, int dim,
                        int ffn_dim, std::mt19937_64& rng) {
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l) + ".";
    add_norm(store, p + "norm1", dim);
    add_dense(store, p + "attn.q", dim, dim, rng);
    add_dense(store, p + "attn.k", dim, dim, rng);
    add_dense(store, p + "attn.v", dim, dim, rng);
    add_dense(store, p + "attn.out", dim, dim, rng);
    add_norm(store, p + "norm2", dim);
    add_dense(store, p + "ffn.in", ffn_dim, dim, rng);
    add_dense(store, p + "ffn.out", dim, ffn_dim, rng);
  }
  if (layers > 0) add_norm(store, prefix + ".norm", dim);
}

ag::Var encoder_forward(ag::Graph& graph, const ParamStore& params, const std::string& prefix,
                        ag::Var tokens, const std::vector<char>& mask,
                        const EncoderSettings& settings) {
  if (static_cast<Eigen::Index>(mask.size()) != tokens.rows()) throw InputError("encoder: mask length mismatch");
  if (std::find(mask.begin(), mask.end(), char{1}) == mask.end()) {
    throw InputError("encoder: every token is masked");
  }
  const Eigen::Index dim = tokens.cols();
  if (settings.heads < 1 || dim % settings.heads != 0) throw InputError("encoder: D not divisible by heads");
  const Eigen::Index dh = dim / settings.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ag::Var x = tokens;
  for (int l = 0; l < settings.layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l) + ".";
    const ag::Var h = norm(graph, params, p + "norm1", x);
    const ag::Var q = dense(graph, params, p + "attn.q", h);
    const ag::Var k = dense(graph, params, p + "attn.k", h);
    const ag::Var v = dense(graph, params, p + "attn.v", h);
    std::vector<ag::Var> heads;
    std::vector<Matrix>* record = nullptr;
    if (settings.capture) record = &settings.capture->layers.emplace_back();
    for (int hd = 0; hd < settings.heads; ++hd) {
      const Eigen::Index start = hd * dh;
      const ag::Var scores =
          graph.scale(graph.matmul_nt(graph.slice_cols(q, start, dh), graph.slice_cols(k, start, dh)), scale);
      const ag::Var attn = graph.masked_softmax(scores, mask);
      if (record) record->push_back(attn.value());
      heads.push_back(graph.matmul(attn, graph.slice_cols(v, start, dh)));
    }
    const ag::Var mixed = dense(graph, params, p + "attn.out", graph.concat_cols(heads));
    x = graph.add(x, dropout(graph, mixed, settings));

    const ag::Var h2 = norm(graph, params, p + "norm2", x);
    const ag::Var ff = dense(graph, params, p + "ffn.out", graph.gelu(dense(graph, params, p + "ffn.in", h2)));
    x = graph.add(x, dropout(graph, ff, settings));
  }
  if (settings.layers > 0) x = norm(graph, params, prefix + ".norm", x);
  return x;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model{config, {}};
  std::mt19937_64 rng(seed);
  switch (config.model) {
    case ModelKind::kEmoTx: {
      add_token_params(model.params, config, rng);
      add_encoder_params(model.params, "encoder", config.layers, config.model_dim, config.ffn_width(), rng);
      const double bound = 1.0 / std::sqrt(static_cast<double>(config.model_dim));
      model.params.add("head.weight", uniform_matrix(rng, config.num_labels, config.model_dim, bound));
      model.params.add("head.bias", Matrix::Zero(config.num_labels, 1));
      break;
    }
    case ModelKind::kSingleTx: add_single_tx_params(model.params, config, rng); break;
    case ModelKind::kMlp: add_mlp_params(model.params, config, rng); break;
  }
  return model;
}

ForwardOutput forward(ag::Graph& graph, const Model& model, const FeatureBundle& bundle,
                      const TokenLayout& layout, const ForwardOptions& options) {
  switch (model.config.model) {
    case ModelKind::kEmoTx: return emotx_forward(graph, model, bundle, layout, options);
    case ModelKind::kSingleTx: return single_tx_forward(graph, model, bundle, layout, options);
    case ModelKind::kMlp: return mlp_forward(graph, model, bundle, layout, options);
  }
  throw ConfigError("unknown model kind");
}

ag::Var loss_terms(ag::Graph& graph, const ForwardOutput& out, const SceneAnnotation& scene,
                   std::span<const double> scene_weights, std::span<const double> char_weights) {
  const Eigen::Index k = out.scene_logits.rows();
  if (static_cast<Eigen::Index>(scene.scene_labels.size()) != k ||
      static_cast<Eigen::Index>(scene_weights.size()) != k ||
      static_cast<Eigen::Index>(char_weights.size()) != k) {
    throw InputError("loss: label length mismatch in scene '" + scene.scene_id + "'");
  }
  const Matrix ones = Matrix::Ones(k, 1);
  const Matrix cw = column(char_weights);
  std::vector<ag::Var> terms = {
      graph.bce_with_logits(out.scene_logits, column(scene.scene_labels), column(scene_weights), ones)};
  for (std::size_t i = 0; i < out.char_logits.size() && i < scene.characters.size(); ++i) {
    if (!out.char_logits[i].valid()) continue;
    terms.push_back(graph.bce_with_logits(out.char_logits[i], column(scene.characters[i].labels), cw, ones));
  }
  return graph.sum(terms);
}

Encoded encode(const TokenSequence& seq, const Model& model, bool capture_attention) {
  const ModelConfig& cfg = model.config;
  if (cfg.model != ModelKind::kEmoTx) throw ConfigError("encode expects an EmoTx model");
  if (seq.mask.size() != static_cast<std::size_t>(seq.tokens.rows()) || seq.roles.size() != seq.mask.size()) {
    throw InputError("encode: sequence parts differ in length");
  }
  ag::Graph graph;
  AttentionRecord record;
  EncoderSettings settings{cfg.layers, cfg.heads, 0.0, false, nullptr, capture_attention ? &record : nullptr};
  const ag::Var z = encoder_forward(graph, model.params, "encoder", graph.constant(seq.tokens), seq.mask, settings);

  const int c_count = cfg.cls_tokens();
  Encoded out;
  out.cls.scene = Matrix::Zero(c_count, z.cols());
  std::vector<Matrix> chars(static_cast<std::size_t>(cfg.max_characters));
  std::vector<int> char_filled(chars.size(), 0);
  int scene_filled = 0;
  for (std::size_t s = 0; s < seq.roles.size(); ++s) {
    if (!seq.mask[s]) continue;
    const TokenTag& tag = seq.roles[s];
    if (tag.role == TokenRole::kSceneCls) {
      out.cls.scene.row(tag.label) = z.value().row(static_cast<Eigen::Index>(s));
      ++scene_filled;
    } else if (tag.role == TokenRole::kCharCls) {
      auto& m = chars.at(static_cast<std::size_t>(tag.character));
      if (m.size() == 0) m = Matrix::Zero(c_count, z.cols());
      m.row(tag.label) = z.value().row(static_cast<Eigen::Index>(s));
      ++char_filled[static_cast<std::size_t>(tag.character)];
    }
  }
  if (scene_filled != c_count) throw InputError("encode: scene classifier tokens missing");
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (char_filled[i] == c_count) {
      out.cls.characters.emplace_back(std::move(chars[i]));
    } else {
      out.cls.characters.emplace_back(std::nullopt);
    }
  }
  if (capture_attention) out.attention = std::move(record);
  return out;
}

Prediction predict(const ClsOutputs& cls, const Matrix& head_weight, const Matrix& head_bias, ClsMode mode) {
  const Eigen::Index k = head_weight.rows();
  auto apply = [&](const Matrix& z) {
    Matrix logits;
    if (mode == ClsMode::kSingle) {
      if (z.rows() != 1) throw InputError("predict: single mode expects one classifier output");
      logits = head_weight * z.transpose();
    } else {
      if (z.rows() != k) throw InputError("predict: expected K classifier outputs");
      logits = (z.array() * head_weight.array()).rowwise().sum().matrix();
    }
    logits += head_bias.reshaped(k, 1);
    return to_probabilities(logits);
  };
  Prediction p;
  p.scene = apply(cls.scene);
  for (const auto& c : cls.characters) {
    if (c) {
      p.characters.emplace_back(apply(*c));
    } else {
      p.characters.emplace_back(std::nullopt);
    }
  }
  return p;
}

double weighted_bce_loss(const Prediction& prediction, const LabelVector& scene_targets,
                         std::span<const LabelVector> char_targets,
                         std::span<const double> scene_weights, std::span<const double> char_weights) {
  const std::size_t k = prediction.scene.size();
  if (scene_targets.size() != k || scene_weights.size() != k || char_weights.size() != k) {
    throw InputError("loss: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) total += bce_term(scene_weights[j], scene_targets[j], prediction.scene[j]);
  for (std::size_t i = 0; i < char_targets.size() && i < prediction.characters.size(); ++i) {
    if (!prediction.characters[i]) continue;
    const auto& p = *prediction.characters[i];
    if (p.size() != k || char_targets[i].size() != k) throw InputError("loss: shape mismatch");
    for (std::size_t j = 0; j < k; ++j) total += bce_term(char_weights[j], char_targets[i][j], p[j]);
  }
  return total;
}

Prediction predict_scene(const Model& model, const FeatureBundle& bundle, const TokenLayout& layout,
                         AttentionRecord* attention) {
  ag::Graph graph;
  ForwardOptions options;
  options.attention = attention;
  const ForwardOutput out = forward(graph, model, bundle, layout, options);
  Prediction p;
  p.scene = to_probabilities(out.scene_logits.value());
  for (const ag::Var& c : out.char_logits) {
    if (c.valid()) {
      p.characters.emplace_back(to_probabilities(c.value()));
    } else {
      p.characters.emplace_back(std::nullopt);
    }
  }
  return p;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  if (!model.params.all_finite()) throw InputError("refusing to save non-finite parameters");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string meta = config_to_json(model.config).dump();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_pod(out, static_cast<std::uint64_t>(model.params.size()));
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const std::string& name = model.params.name(i);
    const Matrix& m = model.params.at(i);
    write_pod(out, static_cast<std::uint64_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint64_t>(m.rows()));
    write_pod(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_size = read_pod<std::uint64_t>(in, "meta size");
  Model model;
  try {
    model.config = config_from_json(nlohmann::json::parse(read_string(in, meta_size, "meta")));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint metadata: " + std::string(e.what()));
  }
  model.config.validate();
  const auto count = read_pod<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, read_pod<std::uint64_t>(in, "name size"), "name");
    const auto rows = read_pod<std::uint64_t>(in, "rows");
    const auto cols = read_pod<std::uint64_t>(in, "cols");
    if (rows * cols > (1ull << 32)) throw IoError("corrupt checkpoint tensor " + name);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw IoError("truncated checkpoint tensor " + name);
    }
    model.params.add(name, std::move(m));
  }
  // Shapes must match a freshly initialized model of the same config.
  const Model reference = init_model(model.config, 0);
  if (reference.params.size() != model.params.size()) throw IoError("checkpoint tensor set mismatch");
  for (std::size_t i = 0; i < reference.params.size(); ++i) {
    const std::string& name = reference.params.name(i);
    if (!model.params.contains(name)) throw IoError("checkpoint lacks tensor " + name);
    const Matrix& a = reference.params.at(i);
    const Matrix& b = model.params.at(name);
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw IoError("checkpoint tensor " + name + " has wrong shape");
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path& path, ModelKind kind, ClsMode cls_mode) {
  Model model = load_checkpoint(path);
  if (model.config.model != kind || model.config.cls_mode != cls_mode) {
    throw ConfigError("checkpoint holds " + std::string(to_string(model.config.model)) + "/" +
                      std::string(to_string(model.config.cls_mode)) + ", requested " +
                      std::string(to_string(kind)) + "/" + std::string(to_string(cls_mode)));
  }
  return model;
}

}  // namespace emotx

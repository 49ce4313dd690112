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

#include "emotx/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "emotx/error.hpp"

namespace emotx {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint64_t out[1];
  seq.generate(reinterpret_cast<std::uint32_t*>(out), reinterpret_cast<std::uint32_t*>(out) + 2);
  return out[0];
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const FeatureBundle& bundle_for(const SceneBatchSource& data, std::size_t index) {
  if (data.dataset == nullptr || data.bundles.size() != data.dataset->scenes.size()) {
    throw InputError("every scene needs exactly one feature bundle");
  }
  const FeatureBundle& b = data.bundles[index];
  if (b.scene_id != data.dataset->scenes[index].scene_id) {
    throw InputError("feature bundle order differs from the dataset at scene " + data.dataset->scenes[index].scene_id);
  }
  return b;
}

std::vector<std::size_t> split_indices(const Dataset& dataset, const std::string& split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
    if (split.empty() || dataset.scenes[i].split == split) out.push_back(i);
  }
  return out;
}

double geometric_mean(double a, double b) { return std::sqrt(std::max(0.0, a) * std::max(0.0, b)); }

}  // namespace

std::vector<double> sample_frame_times(double duration, int max_frames, SampleMode mode, std::uint64_t seed,
                                       double fps) {
  if (!(duration > 0.0)) throw InputError("sample_frame_times: duration must be positive");
  const double intervals = std::ceil(duration * fps - 1e-9);
  const int n = static_cast<int>(std::min(intervals, static_cast<double>(max_frames)));
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(n));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double start = i / fps;
    if (mode == SampleMode::kInfer) {
      times.push_back(start);
      continue;
    }
    const double end = (i + 1) / fps;
    const double t = start + unit(rng) * (end - start);
    times.push_back(std::min(t, std::nextafter(end, start)));
  }
  return times;
}

PlateauScheduler::PlateauScheduler(double lr, double factor, int patience, double min_delta)
    : lr_(lr), factor_(factor), patience_(patience), min_delta_(min_delta),
      best_(-std::numeric_limits<double>::infinity()) {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
  if (patience < 1) throw ConfigError("plateau patience must be positive");
}

double PlateauScheduler::step(double metric) {
  if (metric > best_ + min_delta_) {
    best_ = metric;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ >= patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
    ++reductions_;
  }
  return lr_;
}

Adam::Adam(const ParamStore& like, double beta1, double beta2, double eps)
    : m_(like.zeros_like()), v_(like.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamStore& params, const ParamStore& grads, double lr) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads.at(i);
    Matrix& m = m_.at(i);
    Matrix& v = v_.at(i);
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    params.at(i).array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

std::size_t select_checkpoint(std::span<const std::pair<double, double>> history) {
  if (history.empty()) throw InputError("select_checkpoint: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (geometric_mean(history[i].first, history[i].second) >
        geometric_mean(history[best].first, history[best].second)) {
      best = i;
    }
  }
  return best;
}

SceneAnnotation prepared_scene(const SceneAnnotation& scene, const ModelConfig& config) {
  if (scene.characters.size() <= static_cast<std::size_t>(config.max_characters)) return scene;
  return truncate_characters(scene, static_cast<std::size_t>(config.max_characters));
}

TrainResult train(const SceneBatchSource& data, const ModelConfig& model_config, const TrainConfig& config,
                  const TrainHooks& hooks) {
  const Dataset& dataset = *data.dataset;
  if (dataset.label_set != model_config.label_set) {
    throw ConfigError("dataset label set " + dataset.label_set + " differs from model " + model_config.label_set);
  }
  if (config.batch_size < 1 || config.epochs < 1) throw ConfigError("batch size and epochs must be positive");
  const std::vector<std::size_t> train_idx = split_indices(dataset, config.train_split);
  if (train_idx.empty()) throw ConfigError("empty training split '" + config.train_split + "'");
  if (split_indices(dataset, config.val_split).empty()) {
    throw ConfigError("empty validation split '" + config.val_split + "'");
  }

  std::vector<SceneAnnotation> prepared(dataset.scenes.size());
  std::vector<SceneAnnotation> train_scenes;
  for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
    bundle_for(data, i);
    prepared[i] = prepared_scene(dataset.scenes[i], model_config);
  }
  for (std::size_t i : train_idx) train_scenes.push_back(prepared[i]);
  const LabelSet labels = LabelSet::named(dataset.label_set);
  const std::vector<double> scene_w = compute_positive_weights(train_scenes, labels, Level::kScene);
  const std::vector<double> char_w = compute_positive_weights(train_scenes, labels, Level::kCharacter);

  TrainResult result;
  Model model = init_model(model_config, config.seed);
  result.best = model;
  Adam adam(model.params);
  ParamStore grads = model.params.zeros_like();
  PlateauScheduler scheduler(config.learning_rate, config.lr_factor, config.patience, config.min_delta);
  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 1, 0));
  std::mt19937_64 dropout_rng(mix_seed(config.seed, 2, 0));
  double best_selection = -1.0;
  double lr = config.learning_rate;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      grads.set_zero();
      std::vector<std::pair<std::string, double>> batch_losses;
      bool finite = true;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const SceneAnnotation& scene = prepared[idx];
        const FeatureBundle& bundle = data.bundles[idx];
        const auto times = sample_frame_times(scene.duration, model_config.max_frames, SampleMode::kTrain,
                                              mix_seed(config.seed, static_cast<std::uint64_t>(epoch) + 3, idx));
        const TokenLayout layout = plan_tokens(bundle, scene, times, model_config, config.drop);
        ag::Graph graph;
        ForwardOptions options;
        options.train = true;
        options.rng = &dropout_rng;
        const ForwardOutput out = forward(graph, model, bundle, layout, options);
        const ag::Var loss = graph.scale(loss_terms(graph, out, scene, scene_w, char_w), inv_batch);
        const double value = loss.value()(0, 0) / inv_batch;
        batch_losses.emplace_back(scene.scene_id, value);
        if (!std::isfinite(value)) {
          finite = false;
          continue;
        }
        epoch_loss += value;
        graph.backward(loss);
        graph.accumulate(grads);
      }
      if (!finite || !grads.all_finite()) {
        std::ostringstream dump;
        dump << "non-finite loss at epoch " << epoch << ", lr " << fmt(lr) << "; batch:";
        for (const auto& [id, v] : batch_losses) dump << ' ' << id << "=" << fmt(v);
        dump << "; gradients finite: " << (grads.all_finite() ? "yes" : "no")
             << "; parameters finite: " << (model.params.all_finite() ? "yes" : "no");
        if (hooks.log) *hooks.log << "abort: " << dump.str() << '\n';
        throw NumericError(dump.str());
      }
      adam.step(model.params, grads, lr);
    }

    const auto preds = infer(model, data, config.val_split, config.drop);
    const LevelTables scene_t = level_tables(preds, dataset, Level::kScene, model_config.max_characters);
    const LevelTables char_t = level_tables(preds, dataset, Level::kCharacter, model_config.max_characters);
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_loss / static_cast<double>(order.size());
    m.lr = lr;
    m.scene_map = mean_ap(scene_t.scores, scene_t.targets).map.value_or(0.0);
    m.char_map = mean_ap(char_t.scores, char_t.targets).map.value_or(0.0);
    m.selection = geometric_mean(m.scene_map, m.char_map);
    result.history.push_back(m);
    if (hooks.log) {
      *hooks.log << "epoch=" << epoch << " loss=" << fmt(m.train_loss) << " lr=" << fmt(m.lr)
                 << " scene_map=" << fmt(m.scene_map) << " char_map=" << fmt(m.char_map)
                 << " selection=" << fmt(m.selection) << '\n';
    }
    if (m.selection > best_selection) {
      best_selection = m.selection;
      result.best = model;
      result.best_epoch = epoch;
    }
    lr = scheduler.step(m.selection);
    if (hooks.on_epoch && hooks.on_epoch(m)) break;
  }
  return result;
}

std::vector<ScenePrediction> infer(const Model& model, const SceneBatchSource& data, const std::string& split,
                                   const DroppedModalities& drop) {
  const Dataset& dataset = *data.dataset;
  if (dataset.label_set != model.config.label_set) {
    throw ConfigError("label set mismatch: checkpoint " + model.config.label_set + ", dataset " + dataset.label_set);
  }
  std::vector<ScenePrediction> out;
  for (std::size_t idx : split_indices(dataset, split)) {
    const FeatureBundle& bundle = bundle_for(data, idx);
    const SceneAnnotation scene = prepared_scene(dataset.scenes[idx], model.config);
    const auto times = sample_frame_times(scene.duration, model.config.max_frames, SampleMode::kInfer, 0);
    const TokenLayout layout = plan_tokens(bundle, scene, times, model.config, drop);
    ScenePrediction p;
    p.scene_id = scene.scene_id;
    p.prediction = predict_scene(model, bundle, layout);
    for (const auto& c : scene.characters) p.character_ids.push_back(c.id);
    out.push_back(std::move(p));
  }
  return out;
}

LevelTables level_tables(const std::vector<ScenePrediction>& predictions, const Dataset& dataset, Level level,
                         std::size_t max_characters) {
  std::map<std::string, const SceneAnnotation*> by_id;
  for (const auto& s : dataset.scenes) by_id[s.scene_id] = &s;
  LevelTables t;
  for (const auto& p : predictions) {
    const auto it = by_id.find(p.scene_id);
    if (it == by_id.end()) throw InputError("prediction for unknown scene " + p.scene_id);
    SceneAnnotation scene = *it->second;
    if (scene.characters.size() > max_characters) scene = truncate_characters(std::move(scene), max_characters);
    if (level == Level::kScene) {
      t.scores.push_back(p.prediction.scene);
      t.targets.push_back(scene.scene_labels);
      continue;
    }
    for (std::size_t i = 0; i < p.prediction.characters.size() && i < scene.characters.size(); ++i) {
      if (!p.prediction.characters[i]) continue;
      t.scores.push_back(*p.prediction.characters[i]);
      t.targets.push_back(scene.characters[i].labels);
    }
  }
  return t;
}

void write_predictions(const std::vector<ScenePrediction>& predictions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  auto row = [&](const std::string& scene, const std::string& target, const Probabilities& p) {
    out << scene << '\t' << target;
    for (double v : p) out << '\t' << fmt(v);
    out << '\n';
  };
  out << "scene_id\ttarget\tprobabilities\n";
  for (const auto& p : predictions) {
    row(p.scene_id, "scene", p.prediction.scene);
    for (std::size_t i = 0; i < p.prediction.characters.size(); ++i) {
      if (p.prediction.characters[i]) row(p.scene_id, p.character_ids.at(i), *p.prediction.characters[i]);
    }
  }
}

}  // namespace emotx

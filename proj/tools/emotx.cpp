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

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "emotx/attention.hpp"
#include "emotx/config.hpp"
#include "emotx/data_model.hpp"
#include "emotx/error.hpp"
#include "emotx/evaluation.hpp"
#include "emotx/features.hpp"
#include "emotx/model.hpp"
#include "emotx/tracks.hpp"
#include "emotx/train.hpp"

namespace fs = std::filesystem;
using namespace emotx;

namespace {

struct CommonFlags {
  std::string config_file;
  std::string label_set;
  std::string drop_modality;
  std::string cls_mode;
  std::string model;
  long long seed = -1;
  std::string data;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_file, "flat key = value config file")->check(CLI::ExistingFile);
  app->add_option("--label-set", f.label_set, "top10, top25 or emotic26");
  app->add_option("--drop-modality", f.drop_modality, "comma list of video,character,dialog");
  app->add_option("--cls-mode", f.cls_mode, "per-emotion or single")->check(CLI::IsMember({"per-emotion", "single"}));
  app->add_option("--model", f.model, "emotx, emotx-1cls, single-tx or mlp")
      ->check(CLI::IsMember({"emotx", "emotx-1cls", "single-tx", "mlp"}));
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--data", f.data, "dataset directory (default $EMOTX_DATA_ROOT)");
}

// Applies the variant guard when --model or --cls-mode is given.
Model open_checkpoint(const std::string& path, const CommonFlags& f, const ModelConfig& m) {
  Model model = f.model.empty() && f.cls_mode.empty() ? load_checkpoint(path) : load_checkpoint(path, m.model, m.cls_mode);
  if (!f.label_set.empty() && f.label_set != model.config.label_set) {
    throw ConfigError("--label-set " + f.label_set + " but the checkpoint uses " + model.config.label_set);
  }
  return model;
}

fs::path data_dir(const CommonFlags& f) {
  if (!f.data.empty()) return f.data;
  if (const char* env = std::getenv("EMOTX_DATA_ROOT")) return env;
  throw ConfigError("no dataset directory: pass --data or set EMOTX_DATA_ROOT");
}

// Defaults, then the config file, then explicit flags.
std::pair<ModelConfig, TrainConfig> resolve(const CommonFlags& f) {
  KeyValueConfig kv;
  if (!f.config_file.empty()) kv = KeyValueConfig::load(f.config_file);
  if (!f.model.empty()) kv.set("model", f.model);
  if (!f.cls_mode.empty()) kv.set("cls_mode", f.cls_mode);
  if (!f.label_set.empty()) kv.set("label_set", f.label_set);
  if (!f.drop_modality.empty()) kv.set("drop_modality", f.drop_modality);
  if (f.seed >= 0) kv.set("seed", std::to_string(f.seed));
  ModelConfig m;
  TrainConfig t;
  kv.apply(m, t);
  return {m, t};
}

struct LoadedData {
  Dataset dataset;
  std::vector<FeatureBundle> bundles;
  FeatureDims dims;
};

LoadedData load_data(const fs::path& dir) {
  LoadedData d;
  d.dataset = read_dataset(dir / "scenes.jsonl");
  d.dims = read_feature_dims(dir);
  d.bundles = load_bundles(d.dataset, dir / "features", d.dims);
  return d;
}

// Dataset-derived fields override the config so both always agree.
void adopt_dataset(ModelConfig& m, const LoadedData& d, bool label_set_flag) {
  if (label_set_flag && m.label_set != d.dataset.label_set) {
    throw ConfigError("--label-set " + m.label_set + " but the dataset uses " + d.dataset.label_set);
  }
  m.label_set = d.dataset.label_set;
  m.num_labels = static_cast<int>(LabelSet::named(m.label_set).size());
  m.feature_dims = d.dims;
}

void write_split(const Dataset& dataset, const std::string& split, const fs::path& path) {
  Dataset out{dataset.label_set, {}};
  for (const auto& s : dataset.scenes) {
    if (split.empty() || s.split == split) out.scenes.push_back(s);
  }
  write_dataset(out, path);
}

std::pair<double, double> evaluate_into(const Model& model, const LoadedData& data, const std::string& split,
                                        const DroppedModalities& drop, const fs::path& out_dir) {
  const SceneBatchSource src{&data.dataset, data.bundles};
  const auto preds = infer(model, src, split, drop);
  const LabelSet labels = LabelSet::named(model.config.label_set);
  const auto n = static_cast<std::size_t>(model.config.max_characters);
  const LevelTables st = level_tables(preds, data.dataset, Level::kScene, n);
  const LevelTables ct = level_tables(preds, data.dataset, Level::kCharacter, n);
  const MapResult sm = mean_ap(st.scores, st.targets);
  const MapResult cm = mean_ap(ct.scores, ct.targets);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_eval_table(sm, labels, out_dir / "eval_scene.tsv");
    write_eval_table(cm, labels, out_dir / "eval_character.tsv");
    write_split(data.dataset, split, out_dir / "scenes.jsonl");
    write_predictions(preds, out_dir / "predictions.tsv");
  }
  return {sm.map.value_or(0.0), cm.map.value_or(0.0)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-label emotion recognition for movie scenes and characters"};
  app.require_subcommand(1);

  // generate
  CommonFlags gen_flags;
  std::string gen_out;
  int gen_scenes = 64;
  double gen_signal = 1.0;
  int gen_dim = 32;
  std::string gen_signal_modalities = "video,character,dialog";
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(gen, gen_flags);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--scenes", gen_scenes, "number of scenes");
  gen->add_option("--signal", gen_signal, "signal strength (0 = no learnable signal)");
  gen->add_option("--feature-dim", gen_dim, "feature width of every modality");
  gen->add_option("--signal-modalities", gen_signal_modalities, "modalities carrying label signal");

  // train
  CommonFlags train_flags;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "train a model and keep the best epoch");
  add_common(train_cmd, train_flags);
  train_cmd->add_option("--out", train_out, "run directory")->required();

  // eval
  CommonFlags eval_flags;
  std::string eval_ckpt, eval_out, eval_split = "val";
  int eval_trials = 100;
  auto* eval_cmd = app.add_subcommand("eval", "AP tables and random baseline for one split");
  add_common(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "run directory")->required();
  eval_cmd->add_option("--split", eval_split);
  eval_cmd->add_option("--trials", eval_trials, "random-baseline trials");

  // infer
  CommonFlags infer_flags;
  std::string infer_ckpt, infer_out, infer_split;
  auto* infer_cmd = app.add_subcommand("infer", "per-scene and per-character probabilities");
  add_common(infer_cmd, infer_flags);
  infer_cmd->add_option("--checkpoint", infer_ckpt)->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", infer_out, "predictions TSV")->required();
  infer_cmd->add_option("--split", infer_split, "split to run (all scenes if empty)");

  // ablate
  CommonFlags ablate_flags;
  std::string ablate_out;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate every modality subset");
  add_common(ablate, ablate_flags);
  ablate->add_option("--out", ablate_out, "output directory")->required();

  // analyze-attention
  CommonFlags attn_flags;
  std::string attn_ckpt, attn_out, attn_split = "val", attn_scene;
  int attn_character = -1;
  int attn_label = 0;
  AttentionSelect attn_select;
  auto* attn = app.add_subcommand("analyze-attention", "expressiveness profile and attention timelines");
  add_common(attn, attn_flags);
  attn->add_option("--checkpoint", attn_ckpt)->required()->check(CLI::ExistingFile);
  attn->add_option("--out", attn_out, "output directory")->required();
  attn->add_option("--split", attn_split);
  attn->add_option("--scene", attn_scene, "also export the timeline of this scene");
  attn->add_option("--character", attn_character, "character slot for the timeline (scene token if < 0)");
  attn->add_option("--label", attn_label, "emotion index for the timeline");
  attn->add_option("--layer", attn_select.layer, "encoder layer to read (negative counts from the last)");
  attn->add_option("--head", attn_select.head, "attention head to read (mean over heads if < 0)");

  // tracks
  std::string trk_det, trk_gt, trk_out;
  auto* trk = app.add_subcommand("tracks", "face tracking, name propagation and cluster naming");
  trk->add_option("--detections", trk_det)->required()->check(CLI::ExistingFile);
  trk->add_option("--gt", trk_gt, "named ground-truth tracks")->required()->check(CLI::ExistingFile);
  trk->add_option("--out", trk_out, "output track file")->required();
  tracks::TrackerOptions trk_opts;
  tracks::ClusterOptions clu_opts;
  trk->add_option("--iou-gate", trk_opts.iou_gate, "minimum IoU to extend a track");
  trk->add_option("--max-age", trk_opts.max_age, "missed frames before a track ends");
  trk->add_option("--max-clusters", clu_opts.max_clusters, "largest cluster count in the sweep");
  trk->add_option("--name-threshold", clu_opts.name_threshold, "minimum probability to name a track");

  // report
  std::string rep_run, rep_out;
  auto* rep = app.add_subcommand("report", "charts and tables from an eval run");
  rep->add_option("--run", rep_run, "run directory written by eval")->required();
  rep->add_option("--out", rep_out, "report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto [m, t] = resolve(gen_flags);
      SyntheticOptions opts;
      const DroppedModalities signal_on = parse_dropped(gen_signal_modalities);
      opts.signal_video = signal_on.video;
      opts.signal_character = signal_on.character;
      opts.signal_dialog = signal_on.dialog;
      const FeatureDims dims{gen_dim, gen_dim, gen_dim};
      const SyntheticData data =
          generate_synthetic(t.seed, gen_scenes, LabelSet::named(m.label_set), dims, gen_signal, opts);
      write_synthetic(data, gen_out);
      std::cout << "wrote " << gen_scenes << " scenes to " << gen_out << '\n';
      return 0;
    }

    if (train_cmd->parsed()) {
      auto [m, t] = resolve(train_flags);
      const LoadedData data = load_data(data_dir(train_flags));
      adopt_dataset(m, data, !train_flags.label_set.empty());
      fs::create_directories(train_out);
      std::ofstream log(fs::path(train_out) / "metrics.log");
      TrainHooks hooks;
      hooks.log = &log;
      const TrainResult r = train({&data.dataset, data.bundles}, m, t, hooks);
      save_checkpoint(r.best, fs::path(train_out) / "checkpoint.bin");
      for (const auto& e : r.history) {
        std::cout << "epoch " << e.epoch << " loss " << e.train_loss << " scene mAP " << e.scene_map
                  << " char mAP " << e.char_map << '\n';
      }
      std::cout << "best epoch " << r.best_epoch << " -> " << (fs::path(train_out) / "checkpoint.bin").string()
                << '\n';
      return 0;
    }

    if (eval_cmd->parsed()) {
      auto [m, t] = resolve(eval_flags);
      const Model model = open_checkpoint(eval_ckpt, eval_flags, m);
      const LoadedData data = load_data(data_dir(eval_flags));
      const auto [s, c] = evaluate_into(model, data, eval_split, t.drop, eval_out);
      const LevelTables st = level_tables(infer(model, {&data.dataset, data.bundles}, eval_split, t.drop),
                                          data.dataset, Level::kScene, static_cast<std::size_t>(model.config.max_characters));
      const RandomBaseline rb = random_baseline(st.targets, eval_trials, t.seed);
      std::cout << "scene mAP " << s << "\ncharacter mAP " << c << "\nrandom scene mAP " << rb.mean << " +- "
                << rb.stddev << '\n';
      return 0;
    }

    if (infer_cmd->parsed()) {
      auto [m, t] = resolve(infer_flags);
      const Model model = open_checkpoint(infer_ckpt, infer_flags, m);
      const LoadedData data = load_data(data_dir(infer_flags));
      write_predictions(infer(model, {&data.dataset, data.bundles}, infer_split, t.drop), infer_out);
      return 0;
    }

    if (ablate->parsed()) {
      auto [m, t] = resolve(ablate_flags);
      const LoadedData data = load_data(data_dir(ablate_flags));
      adopt_dataset(m, data, !ablate_flags.label_set.empty());
      fs::create_directories(ablate_out);
      std::ofstream table(fs::path(ablate_out) / "ablation.tsv");
      table << "video\tdialog\tcharacter\tscene_map\tchar_map\n";
      // Rows follow the modality grid: single modalities, pairs, then all three.
      const int grid[][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
      for (const auto& row : grid) {
        TrainConfig tc = t;
        tc.drop = {!row[0], !row[2], !row[1]};
        const TrainResult r = train({&data.dataset, data.bundles}, m, tc);
        const auto [s, c] = evaluate_into(r.best, data, tc.val_split, tc.drop, {});
        table << row[0] << '\t' << row[1] << '\t' << row[2] << '\t' << s << '\t' << c << '\n';
        std::cout << "V=" << row[0] << " D=" << row[1] << " C=" << row[2] << " scene " << s << " char " << c << '\n';
      }
      return 0;
    }

    if (attn->parsed()) {
      auto [m, t] = resolve(attn_flags);
      const Model model = open_checkpoint(attn_ckpt, attn_flags, m);
      if (model.config.model != ModelKind::kEmoTx) throw ConfigError("attention analysis needs an EmoTx checkpoint");
      const LoadedData data = load_data(data_dir(attn_flags));
      const SceneBatchSource src{&data.dataset, data.bundles};
      fs::create_directories(attn_out);
      write_profile(expressiveness_profile(model, src, attn_split, {}, attn_select), fs::path(attn_out) / "expressiveness.tsv");
      if (!attn_scene.empty()) {
        for (std::size_t i = 0; i < data.dataset.scenes.size(); ++i) {
          if (data.dataset.scenes[i].scene_id != attn_scene) continue;
          const SceneAnnotation scene = prepared_scene(data.dataset.scenes[i], model.config);
          const auto times = sample_frame_times(scene.duration, model.config.max_frames, SampleMode::kInfer, 0);
          const TokenLayout layout = plan_tokens(data.bundles[i], scene, times, model.config);
          AttentionRecord record;
          predict_scene(model, data.bundles[i], layout, &record);
          write_timeline(attention_timeline(record, layout.tags, attn_character, attn_label, attn_select),
                         fs::path(attn_out) / ("timeline_" + attn_scene + ".tsv"));
        }
      }
      return 0;
    }

    if (trk->parsed()) {
      const auto detections = tracks::read_detections(trk_det);
      const auto gt = tracks::read_tracks(trk_gt);
      const tracks::PipelineResult r = tracks::run_pipeline(detections, gt, trk_opts, clu_opts);
      tracks::write_tracks(r.tracks, trk_out);
      for (const auto& tr : r.tracks) {
        std::cout << "track " << tr.id << " (" << tr.detections.size() << " detections): "
                  << tr.name.value_or("<unnamed>") << " " << tr.name_confidence << '\n';
      }
      const auto named = std::count_if(r.tracks.begin(), r.tracks.end(), [](const auto& t) { return t.name.has_value(); });
      std::cout << "named " << named << "/" << r.tracks.size() << " tracks";
      if (r.partition) std::cout << ", " << r.partition->clusters << " clusters, silhouette " << r.partition->silhouette;
      std::cout << '\n';
      return 0;
    }

    if (rep->parsed()) {
      write_report(rep_run, rep_out);
      std::cout << "report written to " << rep_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

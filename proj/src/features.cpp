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

#include "emotx/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "emotx/error.hpp"

namespace emotx {

static_assert(std::endian::native == std::endian::little,
              "feature containers are written in host order, which must be little-endian");

namespace {

constexpr char kMagic[8] = {'E', 'M', 'T', 'X', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

// Container layout (little-endian):
//   magic[8] u32 version f64 duration
//   u32 n_tags { u32 len, bytes }*
//   u32 rows u32 cols
//   rows x { f64 time, u32 tag, cols x f64 }
struct Container {
  double duration = 0.0;
  std::vector<std::string> tags;
  std::vector<double> times;
  std::vector<std::uint32_t> row_tags;
  Eigen::MatrixXd values;
};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& where) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw SchemaError(where + ": truncated");
  return v;
}

void write_container(const Container& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, c.duration);
  put(out, static_cast<std::uint32_t>(c.tags.size()));
  for (const auto& t : c.tags) {
    put(out, static_cast<std::uint32_t>(t.size()));
    out.write(t.data(), static_cast<std::streamsize>(t.size()));
  }
  put(out, static_cast<std::uint32_t>(c.values.rows()));
  put(out, static_cast<std::uint32_t>(c.values.cols()));
  for (Eigen::Index r = 0; r < c.values.rows(); ++r) {
    put(out, c.times[r]);
    put(out, c.row_tags[r]);
    for (Eigen::Index col = 0; col < c.values.cols(); ++col) put(out, c.values(r, col));
  }
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing feature file " + path.string());
  const std::string where = path.string();
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw SchemaError(where + ": not a feature container");
  }
  if (get<std::uint32_t>(in, where) != kVersion) throw SchemaError(where + ": unsupported version");
  Container c;
  c.duration = get<double>(in, where);
  const auto n_tags = get<std::uint32_t>(in, where);
  for (std::uint32_t i = 0; i < n_tags; ++i) {
    const auto len = get<std::uint32_t>(in, where);
    std::string tag(len, '\0');
    if (!in.read(tag.data(), len)) throw SchemaError(where + ": truncated tag");
    c.tags.push_back(std::move(tag));
  }
  const auto rows = get<std::uint32_t>(in, where);
  const auto cols = get<std::uint32_t>(in, where);
  c.values.resize(rows, cols);
  c.times.resize(rows);
  c.row_tags.resize(rows);
  for (std::uint32_t r = 0; r < rows; ++r) {
    c.times[r] = get<double>(in, where);
    c.row_tags[r] = get<std::uint32_t>(in, where);
    if (c.row_tags[r] >= std::max<std::uint32_t>(1, n_tags)) throw SchemaError(where + ": bad tag");
    for (std::uint32_t col = 0; col < cols; ++col) c.values(r, col) = get<double>(in, where);
  }
  return c;
}

// Rows sorted by time; ties keep file order.
TimedFeatures sorted_rows(const Container& c, const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> order(rows);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return c.times[a] < c.times[b]; });
  TimedFeatures out;
  out.values.resize(static_cast<Eigen::Index>(order.size()), c.values.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.times.push_back(c.times[order[i]]);
    out.values.row(static_cast<Eigen::Index>(i)) = c.values.row(static_cast<Eigen::Index>(order[i]));
  }
  return out;
}

void check_cols(const Container& c, int expected, const std::string& what,
                const std::string& scene_id) {
  if (c.values.rows() > 0 && c.values.cols() != expected) {
    throw SchemaError("scene '" + scene_id + "': " + what + " feature dim " +
                      std::to_string(c.values.cols()) + " does not match configured " +
                      std::to_string(expected));
  }
}

void check_times(const Container& c, double duration, const std::string& what,
                 const std::string& scene_id) {
  for (double t : c.times) {
    if (t < 0.0 || t > duration) {
      throw SchemaError("scene '" + scene_id + "': " + what + " timestamp " + std::to_string(t) +
                        " outside [0, " + std::to_string(duration) + "]");
    }
  }
}

Container to_container(const TimedFeatures& f, double duration, int cols) {
  Container c;
  c.duration = duration;
  c.times = f.times;
  c.row_tags.assign(f.size(), 0);
  c.values = f.values;
  if (c.values.rows() == 0) c.values.resize(0, cols);
  return c;
}

Eigen::VectorXd unit_direction(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v / v.norm();
}

Eigen::MatrixXd noise(std::mt19937_64& rng, Eigen::Index rows, int cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

}  // namespace

const CharacterFeatures* FeatureBundle::find_character(std::string_view id) const {
  for (const auto& c : characters) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

int frame_index(double t) { return static_cast<int>(std::floor(t * kFixtureFps + 1e-9)); }

FeatureBundle load_bundle(const std::string& scene_id, const std::filesystem::path& feature_root,
                          const FeatureDims& expected) {
  const auto dir = feature_root / scene_id;
  const Container video = read_container(dir / "video.bin");
  const Container chars = read_container(dir / "characters.bin");
  const Container utts = read_container(dir / "utterances.bin");

  FeatureBundle b;
  b.scene_id = scene_id;
  b.duration = video.duration;
  b.dims = expected;
  if (chars.duration != b.duration || utts.duration != b.duration) {
    throw SchemaError("scene '" + scene_id + "': modality files disagree on duration");
  }
  check_cols(video, expected.video, "video", scene_id);
  check_cols(chars, expected.character, "character", scene_id);
  check_cols(utts, expected.dialog, "dialog", scene_id);
  check_times(video, b.duration, "video", scene_id);
  check_times(chars, b.duration, "character", scene_id);
  check_times(utts, b.duration, "utterance", scene_id);

  std::vector<std::size_t> all(video.times.size());
  std::iota(all.begin(), all.end(), 0);
  b.video = sorted_rows(video, all);
  all.resize(utts.times.size());
  std::iota(all.begin(), all.end(), 0);
  b.utterances = sorted_rows(utts, all);

  for (std::uint32_t tag = 0; tag < chars.tags.size(); ++tag) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < chars.row_tags.size(); ++r) {
      if (chars.row_tags[r] == tag) rows.push_back(r);
    }
    CharacterFeatures cf{chars.tags[tag], sorted_rows(chars, rows)};
    for (std::size_t i = 1; i < cf.frames.size(); ++i) {
      if (frame_index(cf.frames.times[i]) == frame_index(cf.frames.times[i - 1])) {
        throw SchemaError("scene '" + scene_id + "': character " + cf.id +
                          " has two boxes in one frame");
      }
    }
    b.characters.push_back(std::move(cf));
  }
  std::sort(b.characters.begin(), b.characters.end(),
            [](const CharacterFeatures& a, const CharacterFeatures& c) { return a.id < c.id; });
  return b;
}

void save_bundle(const FeatureBundle& bundle, const std::filesystem::path& feature_root) {
  const auto dir = feature_root / bundle.scene_id;
  std::filesystem::create_directories(dir);
  write_container(to_container(bundle.video, bundle.duration, bundle.dims.video), dir / "video.bin");
  write_container(to_container(bundle.utterances, bundle.duration, bundle.dims.dialog),
                  dir / "utterances.bin");
  Container chars;
  chars.duration = bundle.duration;
  Eigen::Index total = 0;
  for (const auto& c : bundle.characters) total += static_cast<Eigen::Index>(c.frames.size());
  chars.values.resize(total, bundle.dims.character);
  Eigen::Index row = 0;
  for (std::uint32_t tag = 0; tag < bundle.characters.size(); ++tag) {
    const auto& c = bundle.characters[tag];
    chars.tags.push_back(c.id);
    for (std::size_t i = 0; i < c.frames.size(); ++i, ++row) {
      chars.times.push_back(c.frames.times[i]);
      chars.row_tags.push_back(tag);
      chars.values.row(row) = c.frames.values.row(static_cast<Eigen::Index>(i));
    }
  }
  write_container(chars, dir / "characters.bin");
}

SyntheticData generate_synthetic(std::uint64_t seed, int n_scenes, const LabelSet& set,
                                 const FeatureDims& dims, double signal_strength,
                                 const SyntheticOptions& options) {
  if (signal_strength < 0.0 || signal_strength > 1.0) {
    throw InputError("signal_strength must lie in [0, 1]");
  }
  if (n_scenes < 1) throw InputError("generate_synthetic: need at least one scene");
  if (options.max_characters < 1) throw InputError("generate_synthetic: max_characters < 1");
  std::vector<Modality> enabled;
  if (options.signal_video) enabled.push_back(Modality::kVideo);
  if (options.signal_character) enabled.push_back(Modality::kCharacter);
  if (options.signal_dialog) enabled.push_back(Modality::kDialog);
  if (enabled.empty()) enabled = {Modality::kVideo, Modality::kCharacter, Modality::kDialog};

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t k_count = set.size();

  SyntheticData data;
  data.dataset.label_set = set.name();
  data.label_modality.resize(k_count);
  std::vector<double> prevalence(k_count);
  std::vector<Eigen::VectorXd> direction(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    data.label_modality[k] = enabled[k % enabled.size()];
    // Long-tailed prevalence, most frequent labels first.
    prevalence[k] = 0.08 + 0.32 * std::pow(0.9, static_cast<double>(k));
    const int dim = data.label_modality[k] == Modality::kVideo       ? dims.video
                    : data.label_modality[k] == Modality::kCharacter ? dims.character
                                                                     : dims.dialog;
    direction[k] = unit_direction(rng, dim);
  }

  const double amplitude = signal_strength * options.signal_amplitude;
  const int n_val = static_cast<int>(std::floor(options.val_fraction * n_scenes));
  for (int s = 0; s < n_scenes; ++s) {
    SceneAnnotation scene;
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%04d", s);
    scene.scene_id = id;
    scene.split = s < n_scenes - n_val ? "train" : "val";
    const int n_frames = std::max(
        1, static_cast<int>(std::floor(
               (options.min_duration + unit(rng) * (options.max_duration - options.min_duration)) *
               kFixtureFps)));
    scene.duration = n_frames / kFixtureFps;

    int n_chars = 1 + static_cast<int>(unit(rng) * options.max_characters);
    n_chars = std::min(n_chars, options.max_characters);
    if (unit(rng) < options.extra_character_rate) ++n_chars;

    LabelVector context(k_count, 0);
    for (std::size_t k = 0; k < k_count; ++k) {
      if (data.label_modality[k] != Modality::kCharacter) context[k] = unit(rng) < prevalence[k];
    }

    FeatureBundle bundle;
    bundle.scene_id = scene.scene_id;
    bundle.duration = scene.duration;
    bundle.dims = dims;
    for (int c = 0; c < n_chars; ++c) {
      CharacterAnnotation ch;
      ch.id = "char_" + std::to_string(c);
      ch.labels = context;
      for (std::size_t k = 0; k < k_count; ++k) {
        if (data.label_modality[k] == Modality::kCharacter) ch.labels[k] = unit(rng) < prevalence[k];
      }
      // One contiguous on-screen window covering at least a third of the scene.
      const int min_len = std::max(1, n_frames / 3);
      const int len = min_len + static_cast<int>(unit(rng) * (n_frames - min_len + 1));
      const int start = static_cast<int>(unit(rng) * (n_frames - std::min(len, n_frames) + 1));
      const int end = std::min(n_frames, start + len);
      ch.box_seconds = (end - start) / kFixtureFps;
      CharacterFeatures cf;
      cf.id = ch.id;
      for (int f = start; f < end; ++f) cf.frames.times.push_back(f / kFixtureFps);
      cf.frames.values = noise(rng, end - start, dims.character);
      bundle.characters.push_back(std::move(cf));
      scene.characters.push_back(std::move(ch));
    }

    bundle.video.values = noise(rng, n_frames, dims.video);
    for (int f = 0; f < n_frames; ++f) bundle.video.times.push_back(f / kFixtureFps);

    const int max_utts = std::max(1, static_cast<int>(scene.duration / 2.0));
    const int n_utts = 1 + static_cast<int>(unit(rng) * max_utts);
    for (int j = 0; j < n_utts; ++j) {
      // Evenly spread mid timestamps with jitter, always inside the scene.
      const double slot = scene.duration / n_utts;
      const double t = std::min(scene.duration, slot * (j + 0.25 + 0.5 * unit(rng)));
      scene.utterances.push_back({scene.scene_id + "_utt" + std::to_string(j), t});
      bundle.utterances.times.push_back(t);
    }
    bundle.utterances.values = noise(rng, n_utts, dims.dialog);

    std::vector<LabelVector> char_labels;
    for (const auto& c : scene.characters) char_labels.push_back(c.labels);
    scene.scene_labels = derive_scene_labels(char_labels);
    data.dataset.scenes.push_back(std::move(scene));
    data.bundles.push_back(std::move(bundle));
  }

  // Every label needs a positive at both levels for the class weights.
  for (std::size_t k = 0; k < k_count; ++k) {
    bool any = false;
    for (const auto& scene : data.dataset.scenes) any = any || scene.scene_labels[k];
    if (any) continue;
    const std::size_t s = static_cast<std::size_t>(unit(rng) * n_scenes) % n_scenes;
    auto& scene = data.dataset.scenes[s];
    if (data.label_modality[k] == Modality::kCharacter) {
      scene.characters.front().labels[k] = 1;
    } else {
      for (auto& c : scene.characters) c.labels[k] = 1;
    }
    scene.scene_labels[k] = 1;
  }

  // Inject label signal after labels are final.
  for (std::size_t s = 0; s < data.bundles.size(); ++s) {
    const auto& scene = data.dataset.scenes[s];
    auto& bundle = data.bundles[s];
    for (std::size_t k = 0; k < k_count; ++k) {
      const Eigen::RowVectorXd shift = amplitude * direction[k].transpose();
      switch (data.label_modality[k]) {
        case Modality::kVideo:
          if (scene.scene_labels[k]) bundle.video.values.rowwise() += shift;
          break;
        case Modality::kDialog:
          if (scene.scene_labels[k]) bundle.utterances.values.rowwise() += shift;
          break;
        case Modality::kCharacter:
          for (std::size_t c = 0; c < scene.characters.size(); ++c) {
            if (scene.characters[c].labels[k]) bundle.characters[c].frames.values.rowwise() += shift;
          }
          break;
      }
    }
  }
  return data;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  write_dataset(data.dataset, dir / "scenes.jsonl");
  for (const auto& b : data.bundles) save_bundle(b, dir / "features");
  nlohmann::json meta;
  meta["label_set"] = data.dataset.label_set;
  const FeatureDims dims = data.bundles.empty() ? FeatureDims{} : data.bundles.front().dims;
  meta["dims"] = {{"video", dims.video}, {"character", dims.character}, {"dialog", dims.dialog}};
  meta["fps"] = kFixtureFps;
  std::vector<std::string> modality;
  for (Modality m : data.label_modality) {
    modality.push_back(m == Modality::kVideo ? "video" : m == Modality::kCharacter ? "character" : "dialog");
  }
  meta["label_modality"] = modality;
  std::ofstream(dir / "dataset.json") << meta.dump(2) << '\n';
}

std::vector<FeatureBundle> load_bundles(const Dataset& dataset,
                                        const std::filesystem::path& feature_root,
                                        const FeatureDims& expected) {
  std::vector<FeatureBundle> out;
  out.reserve(dataset.scenes.size());
  for (const auto& scene : dataset.scenes) {
    out.push_back(load_bundle(scene.scene_id, feature_root, expected));
    if (std::abs(out.back().duration - scene.duration) > 1e-9) {
      throw SchemaError("scene '" + scene.scene_id + "': feature duration disagrees with annotation");
    }
  }
  return out;
}

FeatureDims read_feature_dims(const std::filesystem::path& dataset_dir) {
  std::ifstream in(dataset_dir / "dataset.json");
  if (!in) throw IoError("missing " + (dataset_dir / "dataset.json").string());
  const auto meta = nlohmann::json::parse(in);
  const auto& d = meta.at("dims");
  return {d.at("video").get<int>(), d.at("character").get<int>(), d.at("dialog").get<int>()};
}

}  // namespace emotx

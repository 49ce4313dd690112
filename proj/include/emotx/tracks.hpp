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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace emotx::tracks {

/// Pixel box with x1 < x2 and y1 < y2.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);
/// Fraction of `inner`'s area covered by `outer`.
double containment(const Box& inner, const Box& outer);

enum class Kind { kFace, kPerson };

struct Detection {
  int frame = 0;
  Box box;
  double score = 0.0;
  Kind kind = Kind::kFace;
  /// Unit-normalized identity vector.
  Eigen::VectorXd feature;
};

struct Track {
  int id = 0;
  /// Strictly increasing frames, one detection per frame.
  std::vector<Detection> detections;
  std::optional<std::string> name;
  double name_confidence = 0.0;
};

struct FacePerson {
  std::size_t face = 0;
  std::size_t person = 0;
};

/// Pairs faces with persons of the same frame when at least `min_inside` of
/// the face lies in the person box. A person keeps only its best-scoring face;
/// a face goes to the person containing most of it.
std::vector<FacePerson> map_face_to_person(std::span<const Detection> faces, std::span<const Detection> persons,
                                           double min_inside = 0.9);

struct TrackerOptions {
  double iou_gate = 0.3;
  int max_age = 3;
};

/// SORT-style tracking: constant-velocity Kalman prediction, greedy IoU
/// association, a new track when no prediction overlaps by at least the gate,
/// and termination after more than `max_age` consecutive missed frames.
/// Detections within a frame are put in a canonical order first.
std::vector<Track> track(std::vector<Detection> detections, const TrackerOptions& options = {});

/// Per detection, inherits the name of the best same-frame ground-truth
/// detection with IoU >= threshold; the track takes the majority name, ties
/// leave it unnamed.
void propagate_names(std::vector<Track>& tracks, std::span<const Track> ground_truth, double threshold = 0.7);

/// Mean silhouette of a partition under a distance matrix; singletons score 0.
double silhouette(const Eigen::MatrixXd& distance, const std::vector<int>& assignment);

struct ClusterOptions {
  int max_clusters = 20;
  double name_threshold = 0.7;
};

struct Partition {
  /// Cluster id per detection, detections listed track by track.
  std::vector<int> assignment;
  int clusters = 0;
  double silhouette = 0.0;
};

/// Complete-linkage agglomerative partitions over cosine distance, seeded with
/// one cluster per track and never joining tracks that share a frame. Returns
/// every partition for 2..min(max_clusters, tracks) clusters reachable.
std::vector<Partition> candidate_partitions(std::span<const Track> tracks, const ClusterOptions& options = {});

/// Picks the highest-silhouette partition, names each cluster by its named
/// detections (uniform over `names` if it has none) and names every unnamed
/// track whose averaged distribution peaks at or above the threshold. Fewer
/// than two tracks: nothing happens and nullopt is returned.
std::optional<Partition> cluster_and_name(std::vector<Track>& tracks, const std::vector<std::string>& names,
                                          const ClusterOptions& options = {});

/// Line-delimited JSON: {"frame", "kind", "box": [x1,y1,x2,y2], "score", "feature": [...]}.
std::vector<Detection> read_detections(const std::filesystem::path& path);
void write_detections(std::span<const Detection> detections, const std::filesystem::path& path);
/// One track per line: {"track_id", "name", "confidence", "detections": [...]}.
std::vector<Track> read_tracks(const std::filesystem::path& path);
void write_tracks(std::span<const Track> tracks, const std::filesystem::path& path);

struct PipelineResult {
  std::vector<Track> tracks;
  std::optional<Partition> partition;
  std::vector<FacePerson> pairs;
};

/// Face-person pairing, face tracking, name propagation from the ground-truth
/// tracks, then clustering and naming with the names those tracks carry.
PipelineResult run_pipeline(std::span<const Detection> detections, std::span<const Track> ground_truth,
                            const TrackerOptions& tracker = {}, const ClusterOptions& cluster = {});

}  // namespace emotx::tracks

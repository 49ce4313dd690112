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

#include "emotx/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include <json.hpp>

#include "emotx/error.hpp"

namespace emotx::tracks {

namespace {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;

// Constant-velocity filter over (cx, cy, w, h).
class BoxFilter {
 public:
  explicit BoxFilter(const Box& box) {
    x_.setZero();
    x_.head<4>() = measure(box);
    P_ = Mat8::Identity() * 10.0;
    P_.bottomRightCorner<4, 4>() *= 1000.0;
    F_ = Mat8::Identity();
    F_.topRightCorner<4, 4>() = Mat4::Identity();
    Q_ = Mat8::Identity();
    Q_.bottomRightCorner<4, 4>() *= 0.01;
    R_ = Mat4::Identity();
    R_(2, 2) = R_(3, 3) = 10.0;
  }

  Box predict() {
    for (int i = 2; i < 4; ++i) {
      if (x_(i) + x_(i + 4) <= 1e-6) x_(i + 4) = 0.0;
    }
    x_ = F_ * x_;
    P_ = F_ * P_ * F_.transpose() + Q_;
    return box();
  }

  void update(const Box& box) {
    const Eigen::Matrix<double, 4, 8> H = Eigen::Matrix<double, 4, 8>::Identity();
    const Vec4 y = measure(box) - H * x_;
    const Mat4 S = H * P_ * H.transpose() + R_;
    const Eigen::Matrix<double, 8, 4> K = P_ * H.transpose() * S.inverse();
    x_ += K * y;
    P_ = (Mat8::Identity() - K * H) * P_;
  }

  Box box() const {
    const double w = std::max(x_(2), 1e-6);
    const double h = std::max(x_(3), 1e-6);
    return {x_(0) - w / 2, x_(1) - h / 2, x_(0) + w / 2, x_(1) + h / 2};
  }

 private:
  static Vec4 measure(const Box& b) {
    return {(b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2, b.x2 - b.x1, b.y2 - b.y1};
  }

  Vec8 x_;
  Mat8 P_, F_, Q_;
  Mat4 R_;
};

struct LiveTrack {
  Track track;
  BoxFilter filter;
  int missed = 0;
};

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - a.dot(b) / (na * nb);
}

std::string kind_name(Kind k) { return k == Kind::kFace ? "face" : "person"; }

Kind parse_kind(const std::string& s) {
  if (s == "face") return Kind::kFace;
  if (s == "person") return Kind::kPerson;
  throw SchemaError("unknown detection kind '" + s + "'");
}

nlohmann::json detection_json(const Detection& d) {
  std::vector<double> f(d.feature.data(), d.feature.data() + d.feature.size());
  return {{"frame", d.frame},
          {"kind", kind_name(d.kind)},
          {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
          {"score", d.score},
          {"feature", f}};
}

Detection detection_from(const nlohmann::json& j) {
  Detection d;
  try {
    d.frame = j.at("frame").get<int>();
    d.kind = parse_kind(j.value("kind", std::string("face")));
    const auto box = j.at("box").get<std::vector<double>>();
    if (box.size() != 4) throw SchemaError("box needs four numbers");
    d.box = {box[0], box[1], box[2], box[3]};
    d.score = j.value("score", 1.0);
    const auto f = j.value("feature", std::vector<double>{});
    d.feature = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed detection: ") + e.what());
  }
  if (!(d.box.x1 < d.box.x2 && d.box.y1 < d.box.y2)) throw SchemaError("malformed box at frame " + std::to_string(d.frame));
  if (d.feature.size() > 0 && std::abs(d.feature.norm() - 1.0) > 1e-6) {
    throw SchemaError("identity feature not unit-normalized at frame " + std::to_string(d.frame));
  }
  return d;
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

double containment(const Box& inner, const Box& outer) {
  const double w = std::min(inner.x2, outer.x2) - std::max(inner.x1, outer.x1);
  const double h = std::min(inner.y2, outer.y2) - std::max(inner.y1, outer.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h / inner.area();
}

std::vector<FacePerson> map_face_to_person(std::span<const Detection> faces, std::span<const Detection> persons,
                                           double min_inside) {
  // Each face goes to the person that contains most of it.
  std::map<std::size_t, std::size_t> best_face;  // person -> face
  for (std::size_t f = 0; f < faces.size(); ++f) {
    double best = -1.0;
    std::size_t owner = persons.size();
    for (std::size_t p = 0; p < persons.size(); ++p) {
      if (persons[p].frame != faces[f].frame) continue;
      const double c = containment(faces[f].box, persons[p].box);
      if (c >= min_inside && c > best) {
        best = c;
        owner = p;
      }
    }
    if (owner == persons.size()) continue;
    const auto it = best_face.find(owner);
    if (it == best_face.end() || faces[f].score > faces[it->second].score) best_face[owner] = f;
  }
  std::vector<FacePerson> pairs;
  for (const auto& [person, face] : best_face) pairs.push_back({face, person});
  std::sort(pairs.begin(), pairs.end(), [](const FacePerson& a, const FacePerson& b) { return a.face < b.face; });
  return pairs;
}

std::vector<Track> track(std::vector<Detection> detections, const TrackerOptions& options) {
  std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    return std::tie(a.frame, a.box.x1, a.box.y1, a.box.x2, a.box.y2, a.score) <
           std::tie(b.frame, b.box.x1, b.box.y1, b.box.x2, b.box.y2, b.score);
  });
  std::vector<Track> finished;
  std::vector<LiveTrack> live;
  int next_id = 0;
  std::size_t cursor = 0;
  if (detections.empty()) return finished;
  const int first = detections.front().frame;
  const int last = detections.back().frame;
  for (int frame = first; frame <= last; ++frame) {
    std::vector<const Detection*> current;
    while (cursor < detections.size() && detections[cursor].frame == frame) current.push_back(&detections[cursor++]);

    std::vector<Box> predicted;
    for (auto& t : live) predicted.push_back(t.filter.predict());

    std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
    for (std::size_t t = 0; t < live.size(); ++t) {
      for (std::size_t d = 0; d < current.size(); ++d) {
        const double o = iou(predicted[t], current[d]->box);
        if (o >= options.iou_gate) candidates.emplace_back(o, t, d);
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
    std::vector<char> track_used(live.size(), 0);
    std::vector<char> det_used(current.size(), 0);
    for (const auto& [o, t, d] : candidates) {
      if (track_used[t] || det_used[d]) continue;
      track_used[t] = det_used[d] = 1;
      live[t].filter.update(current[d]->box);
      live[t].track.detections.push_back(*current[d]);
      live[t].missed = 0;
    }
    for (std::size_t t = 0; t < live.size(); ++t) {
      if (!track_used[t]) ++live[t].missed;
    }
    for (std::size_t d = 0; d < current.size(); ++d) {
      if (det_used[d]) continue;
      LiveTrack lt{Track{next_id++, {*current[d]}, std::nullopt, 0.0}, BoxFilter(current[d]->box), 0};
      live.push_back(std::move(lt));
    }
    for (auto it = live.begin(); it != live.end();) {
      if (it->missed > options.max_age) {
        finished.push_back(std::move(it->track));
        it = live.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& t : live) finished.push_back(std::move(t.track));
  std::sort(finished.begin(), finished.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
  return finished;
}

void propagate_names(std::vector<Track>& tracks, std::span<const Track> ground_truth, double threshold) {
  std::multimap<int, std::pair<const Detection*, const std::string*>> gt_by_frame;
  for (const Track& g : ground_truth) {
    if (!g.name) continue;
    for (const Detection& d : g.detections) gt_by_frame.emplace(d.frame, std::make_pair(&d, &*g.name));
  }
  for (Track& t : tracks) {
    std::map<std::string, int> votes;
    int named = 0;
    for (const Detection& d : t.detections) {
      double best = -1.0;
      const std::string* name = nullptr;
      const auto [lo, hi] = gt_by_frame.equal_range(d.frame);
      for (auto it = lo; it != hi; ++it) {
        const double o = iou(d.box, it->second.first->box);
        if (o >= threshold && o > best) {
          best = o;
          name = it->second.second;
        }
      }
      if (name) {
        ++votes[*name];
        ++named;
      }
    }
    int top = 0;
    int runners = 0;
    std::string winner;
    for (const auto& [name, count] : votes) {
      if (count > top) {
        top = count;
        winner = name;
        runners = 1;
      } else if (count == top) {
        ++runners;
      }
    }
    if (top > 0 && runners == 1) {
      t.name = winner;
      t.name_confidence = static_cast<double>(top) / named;
    } else {
      t.name.reset();
      t.name_confidence = 0.0;
    }
  }
}

double silhouette(const Eigen::MatrixXd& distance, const std::vector<int>& assignment) {
  const std::size_t n = assignment.size();
  if (static_cast<std::size_t>(distance.rows()) != n || static_cast<std::size_t>(distance.cols()) != n) {
    throw InputError("silhouette: distance matrix size mismatch");
  }
  if (n == 0) return 0.0;
  std::map<int, int> sizes;
  for (int a : assignment) ++sizes[a];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[assignment[i]] == 1) continue;
    std::map<int, double> sums;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sums[assignment[j]] += distance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    const double a = sums[assignment[i]] / (sizes[assignment[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [c, s] : sums) {
      if (c != assignment[i]) b = std::min(b, s / sizes[c]);
    }
    if (!std::isfinite(b)) continue;
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

std::vector<Partition> candidate_partitions(std::span<const Track> tracks, const ClusterOptions& options) {
  std::vector<const Detection*> dets;
  std::vector<std::size_t> owner;
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    for (const Detection& d : tracks[t].detections) {
      dets.push_back(&d);
      owner.push_back(t);
    }
  }
  const auto n = static_cast<Eigen::Index>(dets.size());
  Eigen::MatrixXd dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) dist(i, j) = i == j ? 0.0 : cosine_distance(dets[i]->feature, dets[j]->feature);
  }
  const std::size_t nt = tracks.size();
  std::vector<std::set<int>> frames(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    for (const Detection& d : tracks[t].detections) frames[t].insert(d.frame);
  }
  std::vector<std::vector<char>> cannot(nt, std::vector<char>(nt, 0));
  for (std::size_t a = 0; a < nt; ++a) {
    for (std::size_t b = a + 1; b < nt; ++b) {
      const bool overlap = std::any_of(frames[a].begin(), frames[a].end(), [&](int f) { return frames[b].count(f) > 0; });
      cannot[a][b] = cannot[b][a] = overlap;
    }
  }
  std::vector<std::vector<std::size_t>> clusters(nt);
  for (std::size_t t = 0; t < nt; ++t) clusters[t] = {t};

  auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    for (std::size_t ta : a) {
      for (std::size_t tb : b) {
        if (cannot[ta][tb]) return std::numeric_limits<double>::infinity();
      }
    }
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::find(a.begin(), a.end(), owner[static_cast<std::size_t>(i)]) == a.end()) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::find(b.begin(), b.end(), owner[static_cast<std::size_t>(j)]) == b.end()) continue;
        worst = std::max(worst, dist(i, j));
      }
    }
    return worst;
  };

  std::vector<Partition> out;
  const std::size_t upper = std::min<std::size_t>(static_cast<std::size_t>(options.max_clusters), nt);
  while (true) {
    if (clusters.size() >= 2 && clusters.size() <= upper) {
      Partition p;
      p.clusters = static_cast<int>(clusters.size());
      std::vector<int> track_cluster(nt);
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (std::size_t t : clusters[c]) track_cluster[t] = static_cast<int>(c);
      }
      for (std::size_t i = 0; i < dets.size(); ++i) p.assignment.push_back(track_cluster[owner[i]]);
      p.silhouette = silhouette(dist, p.assignment);
      out.push_back(std::move(p));
    }
    if (clusters.size() <= 2) break;
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0;
    std::size_t bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double l = linkage(clusters[a], clusters[b]);
        if (l < best) {
          best = l;
          ba = a;
          bb = b;
        }
      }
    }
    if (!std::isfinite(best)) break;
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    std::sort(clusters[ba].begin(), clusters[ba].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::optional<Partition> cluster_and_name(std::vector<Track>& tracks, const std::vector<std::string>& names,
                                          const ClusterOptions& options) {
  if (tracks.size() < 2) return std::nullopt;
  const std::vector<Partition> candidates = candidate_partitions(tracks, options);
  if (candidates.empty()) return std::nullopt;
  const Partition* chosen = &candidates.front();
  for (const Partition& p : candidates) {
    if (p.silhouette > chosen->silhouette) chosen = &p;
  }

  const std::size_t nn = names.size();
  std::vector<Eigen::VectorXd> dist(static_cast<std::size_t>(chosen->clusters), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nn)));
  std::size_t i = 0;
  for (const Track& t : tracks) {
    for (std::size_t d = 0; d < t.detections.size(); ++d, ++i) {
      if (!t.name) continue;
      const auto it = std::find(names.begin(), names.end(), *t.name);
      if (it == names.end()) continue;
      dist[static_cast<std::size_t>(chosen->assignment[i])](it - names.begin()) += 1.0;
    }
  }
  for (auto& v : dist) {
    const double s = v.sum();
    if (s > 0.0) {
      v /= s;
    } else if (nn > 0) {
      v.setConstant(1.0 / static_cast<double>(nn));
    }
  }

  i = 0;
  for (Track& t : tracks) {
    const std::size_t begin = i;
    i += t.detections.size();
    if (t.name || nn == 0 || t.detections.empty()) continue;
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nn));
    for (std::size_t d = begin; d < i; ++d) avg += dist[static_cast<std::size_t>(chosen->assignment[d])];
    avg /= static_cast<double>(t.detections.size());
    Eigen::Index arg = 0;
    const double top = avg.maxCoeff(&arg);
    t.name_confidence = top;
    if (top >= options.name_threshold) t.name = names[static_cast<std::size_t>(arg)];
  }
  return *chosen;
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::vector<Detection> out;
  for_each_line(path, [&](const nlohmann::json& j) { out.push_back(detection_from(j)); });
  return out;
}

void write_detections(std::span<const Detection> detections, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Detection& d : detections) out << detection_json(d).dump() << '\n';
}

std::vector<Track> read_tracks(const std::filesystem::path& path) {
  std::vector<Track> out;
  for_each_line(path, [&](const nlohmann::json& j) {
    Track t;
    try {
      t.id = j.at("track_id").get<int>();
      if (j.contains("name") && !j.at("name").is_null()) t.name = j.at("name").get<std::string>();
      t.name_confidence = j.value("confidence", t.name ? 1.0 : 0.0);
      for (const auto& d : j.at("detections")) t.detections.push_back(detection_from(d));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("malformed track: ") + e.what());
    }
    for (std::size_t k = 1; k < t.detections.size(); ++k) {
      if (t.detections[k].frame <= t.detections[k - 1].frame) {
        throw SchemaError("track " + std::to_string(t.id) + ": frames must strictly increase");
      }
    }
    out.push_back(std::move(t));
  });
  return out;
}

void write_tracks(std::span<const Track> tracks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Track& t : tracks) {
    nlohmann::json j;
    j["track_id"] = t.id;
    j["name"] = t.name ? nlohmann::json(*t.name) : nlohmann::json(nullptr);
    j["confidence"] = t.name_confidence;
    j["detections"] = nlohmann::json::array();
    for (const Detection& d : t.detections) j["detections"].push_back(detection_json(d));
    out << j.dump() << '\n';
  }
}

PipelineResult run_pipeline(std::span<const Detection> detections, std::span<const Track> ground_truth,
                            const TrackerOptions& tracker, const ClusterOptions& cluster) {
  std::vector<Detection> faces;
  std::vector<Detection> persons;
  for (const Detection& d : detections) (d.kind == Kind::kFace ? faces : persons).push_back(d);
  PipelineResult result;
  result.pairs = map_face_to_person(faces, persons);
  result.tracks = track(faces, tracker);
  propagate_names(result.tracks, ground_truth);
  std::set<std::string> name_set;
  for (const Track& g : ground_truth) {
    if (g.name) name_set.insert(*g.name);
  }
  const std::vector<std::string> names(name_set.begin(), name_set.end());
  result.partition = cluster_and_name(result.tracks, names, cluster);
  return result;
}

}  // namespace emotx::tracks

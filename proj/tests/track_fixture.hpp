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

// Two identities with orthogonal identity vectors. In frames 0-9 both appear
// side by side and carry ground-truth names; in frames 20-29 they reappear
// lower in the image without names.

#include <string>
#include <vector>

#include "emotx/tracks.hpp"

namespace emotx::testing {

struct SeparableTracks {
  std::vector<tracks::Detection> detections;
  std::vector<tracks::Track> ground_truth;
};

inline tracks::Detection face(int frame, double x, double y, int identity, double score = 0.95) {
  tracks::Detection d;
  d.frame = frame;
  d.box = {x, y, x + 20.0, y + 20.0};
  d.score = score;
  d.kind = tracks::Kind::kFace;
  d.feature = Eigen::VectorXd::Zero(4);
  d.feature(identity) = 1.0;
  return d;
}

inline SeparableTracks separable_tracks() {
  SeparableTracks s;
  s.ground_truth = {{0, {}, "A", 1.0}, {1, {}, "B", 1.0}};
  for (int f = 0; f < 10; ++f) {
    s.detections.push_back(face(f, 0.0 + f, 0.0, 0));
    s.detections.push_back(face(f, 100.0 + f, 0.0, 1));
    s.ground_truth[0].detections.push_back(s.detections[s.detections.size() - 2]);
    s.ground_truth[1].detections.push_back(s.detections.back());
  }
  for (int f = 20; f < 30; ++f) {
    s.detections.push_back(face(f, 0.0, 60.0, 0));
    s.detections.push_back(face(f, 100.0, 60.0, 1));
  }
  return s;
}

}  // namespace emotx::testing

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

// Writes the separable identity fixture as detections.jsonl and gt.jsonl.

#include <cstdio>
#include <filesystem>

#include "emotx/tracks.hpp"
#include "track_fixture.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <out-dir>\n", argv[0]);
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  const auto fx = emotx::testing::separable_tracks();
  emotx::tracks::write_detections(fx.detections, dir / "detections.jsonl");
  emotx::tracks::write_tracks(fx.ground_truth, dir / "gt.jsonl");
  return 0;
}

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

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace emotx {

using Matrix = Eigen::MatrixXd;

/// Named dense tensors in insertion order. Model parameters, their gradients
/// and optimizer moments all use this container so they can be walked in
/// lockstep.
class ParamStore {
 public:
  /// Returns the slot index. Throws ConfigError on a duplicate name.
  std::size_t add(std::string name, Matrix value);

  bool contains(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  Matrix& at(std::string_view name) { return values_[index(name)]; }
  const Matrix& at(std::string_view name) const { return values_[index(name)]; }
  Matrix& at(std::size_t i) { return values_[i]; }
  const Matrix& at(std::size_t i) const { return values_[i]; }

  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t size() const { return values_.size(); }
  std::size_t scalar_count() const;

  /// Same names and shapes, all zeros.
  ParamStore zeros_like() const;
  void set_zero();
  bool all_finite() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace emotx

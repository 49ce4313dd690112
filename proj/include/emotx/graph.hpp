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

#include <functional>
#include <span>
#include <vector>

#include "emotx/params.hpp"

namespace emotx::ag {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode differentiation over dense matrices. Build the forward
/// expression with the op methods, call backward() on a 1x1 result, then
/// accumulate parameter gradients into a ParamStore shaped like the source.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a stored parameter. Repeated calls return the same node.
  Var param(const ParamStore& store, std::string_view name);

  Var add(Var a, Var b);
  /// Adds a 1 x C row to every row of `a`.
  Var add_row(Var a, Var row);
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_nt(Var a, Var b);
  /// x * weight^T + bias, with weight (out x in) and bias (1 x out) optional.
  Var linear(Var x, Var weight, Var bias = {});

  Var gather_rows(Var table, std::vector<int> rows);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var transpose(Var a);

  /// Row-wise normalization with affine 1 x C gamma/beta.
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  /// Row-wise softmax over columns where `key_mask` is true; masked columns are
  /// exactly zero. Every row needs at least one unmasked column.
  Var masked_softmax(Var scores, const std::vector<char>& key_mask);

  Var relu(Var a);
  Var gelu(Var a);
  /// Elementwise product with a constant (dropout masks).
  Var mul_const(Var a, Matrix factor);
  /// Per-row dot products of two equally shaped matrices, as R x 1.
  Var rowwise_dot(Var a, Var b);
  /// Column-wise maximum over rows, as 1 x C. Ties route to the first row.
  Var col_max(Var a);

  /// Sum of weighted binary cross-entropy terms on sigmoid(logits):
  ///   -[w*y*log p + (1-y)*log(1-p)],  p clamped to [eps, 1-eps].
  /// `targets` and `pos_weight` share the shape of `logits`; `include`
  /// entries of 0 drop a term.
  Var bce_with_logits(Var logits, const Matrix& targets, const Matrix& pos_weight,
                      const Matrix& include, double eps = 1e-7);
  Var sum(std::span<const Var> scalars);

  void backward(Var scalar);
  const Matrix& grad(Var v) const;
  /// Adds gradients of every parameter leaf into `grads` (same names as the
  /// store the leaves were bound to).
  void accumulate(ParamStore& grads) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> backward;
    std::ptrdiff_t param = -1;
  };

  Var push(Matrix value, std::function<void()> backward = {});
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id_)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)]; }
  Matrix& g(Var v) { return node(v).grad; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  const ParamStore* store_ = nullptr;
  std::vector<int> param_nodes_;
};

}  // namespace emotx::ag

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

#include "emotx/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "emotx/error.hpp"

namespace emotx::ag {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Matrix& Var::value() const {
  if (!graph_) throw InputError("use of an empty graph variable");
  return graph_->nodes_[static_cast<std::size_t>(id_)].value;
}

void Graph::check(Var v) const {
  if (v.graph_ != this) throw InputError("variable belongs to another graph");
}

Var Graph::push(Matrix value, std::function<void()> backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), -1});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::constant(Matrix value) { return push(std::move(value)); }

Var Graph::param(const ParamStore& store, std::string_view name) {
  if (store_ && store_ != &store) throw InputError("graph parameters must come from one store");
  store_ = &store;
  const auto index = static_cast<std::ptrdiff_t>(store.index(name));
  for (int id : param_nodes_) {
    if (nodes_[static_cast<std::size_t>(id)].param == index) return Var(this, id);
  }
  Var out = push(store.at(static_cast<std::size_t>(index)));
  node(out).param = index;
  param_nodes_.push_back(out.id_);
  return out;
}

Var Graph::add(Var a, Var b) {
  check(a);
  check(b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InputError("add: shape mismatch");
  Var out = push(a.value() + b.value());
  node(out).backward = [this, a, b, out] {
    g(a) += g(out);
    g(b) += g(out);
  };
  return out;
}

Var Graph::add_row(Var a, Var row) {
  check(a);
  check(row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw InputError("add_row: shape mismatch");
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  Var out = push(std::move(v));
  node(out).backward = [this, a, row, out] {
    g(a) += g(out);
    g(row) += g(out).colwise().sum();
  };
  return out;
}

Var Graph::scale(Var a, double s) {
  check(a);
  Var out = push(a.value() * s);
  node(out).backward = [this, a, out, s] { g(a) += s * g(out); };
  return out;
}

Var Graph::matmul(Var a, Var b) {
  check(a);
  check(b);
  if (a.cols() != b.rows()) throw InputError("matmul: shape mismatch");
  Var out = push(a.value() * b.value());
  node(out).backward = [this, a, b, out] {
    g(a).noalias() += g(out) * b.value().transpose();
    g(b).noalias() += a.value().transpose() * g(out);
  };
  return out;
}

Var Graph::matmul_nt(Var a, Var b) {
  check(a);
  check(b);
  if (a.cols() != b.cols()) throw InputError("matmul_nt: shape mismatch");
  Var out = push(a.value() * b.value().transpose());
  node(out).backward = [this, a, b, out] {
    g(a).noalias() += g(out) * b.value();
    g(b).noalias() += g(out).transpose() * a.value();
  };
  return out;
}

Var Graph::linear(Var x, Var weight, Var bias) {
  check(x);
  check(weight);
  if (x.cols() != weight.cols()) throw InputError("linear: input width mismatch");
  Matrix v = x.value() * weight.value().transpose();
  if (bias.valid()) {
    check(bias);
    if (bias.rows() != 1 || bias.cols() != weight.rows()) throw InputError("linear: bias shape");
    v.rowwise() += bias.value().row(0);
  }
  Var out = push(std::move(v));
  node(out).backward = [this, x, weight, bias, out] {
    g(x).noalias() += g(out) * weight.value();
    g(weight).noalias() += g(out).transpose() * x.value();
    if (bias.valid()) g(bias) += g(out).colwise().sum();
  };
  return out;
}

Var Graph::gather_rows(Var table, std::vector<int> rows) {
  check(table);
  Matrix v(static_cast<Eigen::Index>(rows.size()), table.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= table.rows()) throw InputError("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(rows[i]);
  }
  Var out = push(std::move(v));
  node(out).backward = [this, table, rows = std::move(rows), out] {
    Matrix& gt = g(table);
    const Matrix& go = g(out);
    for (std::size_t i = 0; i < rows.size(); ++i) gt.row(rows[i]) += go.row(static_cast<Eigen::Index>(i));
  };
  return out;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InputError("concat_rows: nothing to concatenate");
  Eigen::Index total = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    check(p);
    if (p.cols() != cols) throw InputError("concat_rows: width mismatch");
    total += p.rows();
  }
  Matrix v(total, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  Var out = push(std::move(v));
  node(out).backward = [this, parts = std::vector<Var>(parts.begin(), parts.end()), out] {
    Eigen::Index r0 = 0;
    for (const Var& p : parts) {
      g(p) += g(out).middleRows(r0, p.rows());
      r0 += p.rows();
    }
  };
  return out;
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InputError("concat_cols: nothing to concatenate");
  Eigen::Index total = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) {
    check(p);
    if (p.rows() != rows) throw InputError("concat_cols: height mismatch");
    total += p.cols();
  }
  Matrix v(rows, total);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  Var out = push(std::move(v));
  node(out).backward = [this, parts = std::vector<Var>(parts.begin(), parts.end()), out] {
    Eigen::Index c0 = 0;
    for (const Var& p : parts) {
      g(p) += g(out).middleCols(c0, p.cols());
      c0 += p.cols();
    }
  };
  return out;
}

Var Graph::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  check(a);
  if (start < 0 || count < 0 || start + count > a.cols()) throw InputError("slice_cols: range");
  Var out = push(a.value().middleCols(start, count));
  node(out).backward = [this, a, out, start, count] { g(a).middleCols(start, count) += g(out); };
  return out;
}

Var Graph::transpose(Var a) {
  check(a);
  Var out = push(a.value().transpose());
  node(out).backward = [this, a, out] { g(a) += g(out).transpose(); };
  return out;
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
  check(x);
  check(gamma);
  check(beta);
  const Eigen::Index n = x.cols();
  if (gamma.cols() != n || beta.cols() != n) throw InputError("layer_norm: affine shape");
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std[r];
  }
  Matrix v = xhat.array().rowwise() * gamma.value().row(0).array();
  v.rowwise() += beta.value().row(0);
  Var out = push(std::move(v));
  node(out).backward = [this, x, gamma, beta, out, xhat = std::move(xhat),
                        inv_std = std::move(inv_std)] {
    const Matrix& go = g(out);
    g(gamma) += (go.array() * xhat.array()).colwise().sum().matrix();
    g(beta) += go.colwise().sum();
    const Matrix dxhat = go.array().rowwise() * gamma.value().row(0).array();
    Matrix& gx = g(x);
    const double inv_n = 1.0 / static_cast<double>(xhat.cols());
    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
      const double mean_d = dxhat.row(r).sum() * inv_n;
      const double mean_dx = dxhat.row(r).dot(xhat.row(r)) * inv_n;
      gx.row(r).array() +=
          inv_std[r] * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
    }
  };
  return out;
}

Var Graph::masked_softmax(Var scores, const std::vector<char>& key_mask) {
  check(scores);
  const Matrix& s = scores.value();
  if (static_cast<Eigen::Index>(key_mask.size()) != s.cols()) {
    throw InputError("masked_softmax: mask width mismatch");
  }
  bool any = false;
  for (char m : key_mask) any = any || m;
  if (!any) throw InputError("masked_softmax: every key is masked");
  Matrix p = Matrix::Zero(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      if (key_mask[static_cast<std::size_t>(c)]) mx = std::max(mx, s(r, c));
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      if (key_mask[static_cast<std::size_t>(c)]) {
        p(r, c) = std::exp(s(r, c) - mx);
        total += p(r, c);
      }
    }
    p.row(r) /= total;
  }
  Var out = push(std::move(p));
  node(out).backward = [this, scores, out] {
    const Matrix& pv = node(out).value;
    const Matrix& go = g(out);
    const Eigen::VectorXd inner = (go.array() * pv.array()).rowwise().sum();
    g(scores).array() += pv.array() * (go.colwise() - inner).array();
  };
  return out;
}

Var Graph::relu(Var a) {
  check(a);
  Var out = push(a.value().cwiseMax(0.0));
  node(out).backward = [this, a, out] {
    g(a).array() += (a.value().array() > 0.0).cast<double>() * g(out).array();
  };
  return out;
}

Var Graph::gelu(Var a) {
  check(a);
  const Matrix v = a.value().unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  Var out = push(v);
  node(out).backward = [this, a, out] {
    const Matrix d = a.value().unaryExpr([](double x) {
      return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    });
    g(a).array() += d.array() * g(out).array();
  };
  return out;
}

Var Graph::mul_const(Var a, Matrix factor) {
  check(a);
  if (factor.rows() != a.rows() || factor.cols() != a.cols()) throw InputError("mul_const: shape");
  Var out = push(a.value().cwiseProduct(factor));
  node(out).backward = [this, a, out, factor = std::move(factor)] {
    g(a) += g(out).cwiseProduct(factor);
  };
  return out;
}

Var Graph::rowwise_dot(Var a, Var b) {
  check(a);
  check(b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InputError("rowwise_dot: shape");
  Var out = push((a.value().array() * b.value().array()).rowwise().sum().matrix());
  node(out).backward = [this, a, b, out] {
    const Eigen::VectorXd go = g(out).col(0);
    g(a) += (b.value().array().colwise() * go.array()).matrix();
    g(b) += (a.value().array().colwise() * go.array()).matrix();
  };
  return out;
}

Var Graph::col_max(Var a) {
  check(a);
  if (a.rows() == 0) throw InputError("col_max: no rows");
  const Matrix& av = a.value();
  Matrix v(1, av.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(av.cols()));
  for (Eigen::Index c = 0; c < av.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < av.rows(); ++r) {
      if (av(r, c) > av(best, c)) best = r;
    }
    arg[static_cast<std::size_t>(c)] = best;
    v(0, c) = av(best, c);
  }
  Var out = push(std::move(v));
  node(out).backward = [this, a, out, arg = std::move(arg)] {
    for (std::size_t c = 0; c < arg.size(); ++c) {
      const auto col = static_cast<Eigen::Index>(c);
      g(a)(arg[c], col) += g(out)(0, col);
    }
  };
  return out;
}

Var Graph::bce_with_logits(Var logits, const Matrix& targets, const Matrix& pos_weight,
                           const Matrix& include, double eps) {
  check(logits);
  const Matrix& x = logits.value();
  if (targets.rows() != x.rows() || targets.cols() != x.cols() || pos_weight.rows() != x.rows() ||
      pos_weight.cols() != x.cols() || include.rows() != x.rows() || include.cols() != x.cols()) {
    throw InputError("bce_with_logits: shape mismatch");
  }
  Matrix dx = Matrix::Zero(x.rows(), x.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (include(r, c) == 0.0) continue;
      const double p = sigmoid(x(r, c));
      const double pc = std::clamp(p, eps, 1.0 - eps);
      const double y = targets(r, c);
      const double w = pos_weight(r, c);
      loss -= w * y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
      if (p > eps && p < 1.0 - eps) dx(r, c) = -w * y * (1.0 - p) + (1.0 - y) * p;
    }
  }
  Var out = push(Matrix::Constant(1, 1, loss));
  node(out).backward = [this, logits, out, dx = std::move(dx)] {
    g(logits) += g(out)(0, 0) * dx;
  };
  return out;
}

Var Graph::sum(std::span<const Var> scalars) {
  double total = 0.0;
  for (const Var& s : scalars) {
    check(s);
    if (s.rows() != 1 || s.cols() != 1) throw InputError("sum: expects 1x1 terms");
    total += s.value()(0, 0);
  }
  Var out = push(Matrix::Constant(1, 1, total));
  node(out).backward = [this, parts = std::vector<Var>(scalars.begin(), scalars.end()), out] {
    for (const Var& p : parts) g(p) += g(out);
  };
  return out;
}

void Graph::backward(Var scalar) {
  check(scalar);
  if (scalar.rows() != 1 || scalar.cols() != 1) throw InputError("backward: needs a 1x1 value");
  for (auto& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  node(scalar).grad(0, 0) = 1.0;
  for (auto i = static_cast<std::ptrdiff_t>(scalar.id_); i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward) n.backward();
  }
}

const Matrix& Graph::grad(Var v) const {
  check(v);
  return node(v).grad;
}

void Graph::accumulate(ParamStore& grads) const {
  for (int id : param_nodes_) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) continue;
    grads.at(static_cast<std::size_t>(n.param)) += n.grad;
  }
}

}  // namespace emotx::ag

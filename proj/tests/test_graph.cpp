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

#include <doctest.h>

#include <functional>
#include <random>

#include "emotx/error.hpp"
#include "emotx/graph.hpp"
#include "support.hpp"

using namespace emotx;
using ag::Graph;
using ag::Var;

namespace {

using Builder = std::function<Var(Graph&, std::vector<Var>&)>;

// Largest relative gap between backward() and central differences over
// every entry of every input.
double gradient_gap(const std::vector<Matrix>& inputs, const Builder& build) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(g.constant(m));
  const Var out = build(g, vars);
  g.backward(out);
  const auto eval = [&](const std::vector<Matrix>& xs) {
    Graph h;
    std::vector<Var> v;
    for (const auto& m : xs) v.push_back(h.constant(m));
    return build(h, v).value()(0, 0);
  };
  double worst = 0.0;
  const double step = 1e-6;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index j = 0; j < inputs[i].size(); ++j) {
      auto plus = inputs;
      auto minus = inputs;
      plus[i].data()[j] += step;
      minus[i].data()[j] -= step;
      const double numeric = (eval(plus) - eval(minus)) / (2 * step);
      const double analytic = g.grad(vars[i]).data()[j];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

// Weighted sum to a scalar with fixed random weights so every entry matters.
Var reduce(Graph& g, Var x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const Matrix w = testing::gaussian(rng, x.rows(), x.cols());
  const Var prod = g.rowwise_dot(x, g.constant(w));
  const Var ones = g.constant(Matrix::Ones(1, prod.rows()));
  return g.matmul(ones, prod);
}

}  // namespace

TEST_CASE("op gradients match central differences") {
  std::mt19937_64 rng(5);
  const Matrix a = testing::gaussian(rng, 3, 4);
  const Matrix b = testing::gaussian(rng, 3, 4);
  const Matrix c = testing::gaussian(rng, 4, 2);
  const Matrix row = testing::gaussian(rng, 1, 4);
  const double tol = 1e-6;

  CHECK(gradient_gap({a, b}, [](Graph& g, auto& v) { return reduce(g, g.add(v[0], v[1])); }) < tol);
  CHECK(gradient_gap({a, row}, [](Graph& g, auto& v) { return reduce(g, g.add_row(v[0], v[1])); }) < tol);
  CHECK(gradient_gap({a}, [](Graph& g, auto& v) { return reduce(g, g.scale(v[0], -2.5)); }) < tol);
  CHECK(gradient_gap({a, c}, [](Graph& g, auto& v) { return reduce(g, g.matmul(v[0], v[1])); }) < tol);
  CHECK(gradient_gap({a, b}, [](Graph& g, auto& v) { return reduce(g, g.matmul_nt(v[0], v[1])); }) < tol);
  CHECK(gradient_gap({a, testing::gaussian(rng, 2, 4), testing::gaussian(rng, 1, 2)},
                     [](Graph& g, auto& v) { return reduce(g, g.linear(v[0], v[1], v[2])); }) < tol);
  CHECK(gradient_gap({a}, [](Graph& g, auto& v) { return reduce(g, g.gather_rows(v[0], {2, 0, 2})); }) < tol);
  CHECK(gradient_gap({a, b}, [](Graph& g, auto& v) {
          const std::vector<Var> parts{v[0], v[1]};
          return reduce(g, g.concat_rows(parts));
        }) < tol);
  CHECK(gradient_gap({a, b}, [](Graph& g, auto& v) {
          const std::vector<Var> parts{v[0], v[1]};
          return reduce(g, g.concat_cols(parts));
        }) < tol);
  CHECK(gradient_gap({a}, [](Graph& g, auto& v) { return reduce(g, g.slice_cols(v[0], 1, 2)); }) < tol);
  CHECK(gradient_gap({a}, [](Graph& g, auto& v) { return reduce(g, g.transpose(v[0])); }) < tol);
  CHECK(gradient_gap({a, row, testing::gaussian(rng, 1, 4)},
                     [](Graph& g, auto& v) { return reduce(g, g.layer_norm(v[0], v[1], v[2])); }) < 1e-5);
  CHECK(gradient_gap({a}, [](Graph& g, auto& v) {
          return reduce(g, g.masked_softmax(v[0], {1, 0, 1, 1}));
        }) < tol);
  CHECK(gradient_gap({a}, [](Graph& g, auto& v) { return reduce(g, g.gelu(v[0])); }) < tol);
  CHECK(gradient_gap({a}, [](Graph& g, auto& v) { return reduce(g, g.relu(v[0])); }) < tol);
  CHECK(gradient_gap({a}, [&](Graph& g, auto& v) { return reduce(g, g.mul_const(v[0], b)); }) < tol);
  CHECK(gradient_gap({a, b}, [](Graph& g, auto& v) { return reduce(g, g.rowwise_dot(v[0], v[1])); }) < tol);
  CHECK(gradient_gap({a}, [](Graph& g, auto& v) { return reduce(g, g.col_max(v[0])); }) < tol);

  const Matrix targets = (Matrix(3, 1) << 1, 0, 1).finished();
  const Matrix weights = (Matrix(3, 1) << 2.5, 1, 4).finished();
  const Matrix include = (Matrix(3, 1) << 1, 1, 0).finished();
  CHECK(gradient_gap({testing::gaussian(rng, 3, 1)}, [&](Graph& g, auto& v) {
          return g.bce_with_logits(v[0], targets, weights, include);
        }) < tol);
}

TEST_CASE("forward values of individual ops") {
  Graph g;
  const Var x = g.constant((Matrix(2, 3) << 1, 2, 3, -1, 0, 4).finished());
  const Matrix sm = g.masked_softmax(x, {1, 0, 1}).value();
  CHECK(sm(0, 1) == 0.0);
  CHECK(sm(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))));
  CHECK(sm.row(1).sum() == doctest::Approx(1.0));
  CHECK(g.col_max(x).value() == (Matrix(1, 3) << 1, 2, 4).finished());
  const Matrix ln = g.layer_norm(x, g.constant(Matrix::Ones(1, 3)), g.constant(Matrix::Zero(1, 3))).value();
  CHECK(ln.row(0).sum() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(g.gather_rows(x, {-1, 1}), InputError);
  CHECK(g.gelu(g.constant(Matrix::Zero(1, 1))).value()(0, 0) == 0.0);

  // BCE on a zero logit: ln 2 per term, scaled by w on positives.
  const Var z = g.constant(Matrix::Zero(2, 1));
  const double loss = g.bce_with_logits(z, (Matrix(2, 1) << 1, 0).finished(), (Matrix(2, 1) << 3, 3).finished(),
                                        Matrix::Ones(2, 1))
                          .value()(0, 0);
  CHECK(loss == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("softmax with every key masked is rejected") {
  Graph g;
  CHECK_THROWS(g.masked_softmax(g.constant(Matrix::Zero(1, 2)), {0, 0}));
}

TEST_CASE("parameter gradients accumulate by name") {
  ParamStore store;
  store.add("w", (Matrix(1, 2) << 1, 2).finished());
  Graph g;
  const Var w = g.param(store, "w");
  const Var twice = g.add(w, g.param(store, "w"));
  const Var out = g.matmul_nt(twice, g.constant((Matrix(1, 2) << 3, 4).finished()));
  g.backward(out);
  ParamStore grads = store.zeros_like();
  g.accumulate(grads);
  g.accumulate(grads);
  CHECK(grads.at("w") == (Matrix(1, 2) << 12, 16).finished());
}

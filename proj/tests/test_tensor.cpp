// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <limits>

#include "doctest.h"
#include "hfl/rng.hpp"
#include "hfl/tensor.hpp"

using namespace hfl;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor randt(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (auto& v : t.values) v = scale * rng.gaussian();
  return t;
}
}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul identity and hand sums") {
  Tape tape;
  Var i2 = tape.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  Var x = tape.constant(Tensor::from_rows({{3, 4}, {5, 6}}));
  CHECK(matmul(i2, x).val().values == x.val().values);

  Var a = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  Var ones = tape.constant(Tensor::from_rows({{1}, {1}}));
  const Tensor& c = matmul(a, ones).val();
  CHECK(c.shape == Shape{2, 1});
  CHECK(c.at(0, 0) == 3.0);
  CHECK(c.at(1, 0) == 7.0);
}

TEST_CASE("matmul shape error names both shapes") {
  Tape tape;
  Var a = tape.constant(Tensor({3, 4}));
  Var b = tape.constant(Tensor({5, 2}));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("3x4"), ShapeError);
  try {
    matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("5x2") != std::string::npos);
  }
}

TEST_CASE("matmul backward matches finite differences on 3x4 by 4x2") {
  Rng rng(7);
  std::vector<Tensor> in{randt({3, 4}, rng), randt({4, 2}, rng)};
  Tensor r = randt({3, 2}, rng);
  auto f = [&](Tape& tp, std::span<const Var> v) {
    return reduce_sum(reduce_sum(mul(matmul(v[0], v[1]), tp.constant(r)), 0), 1);
  };
  const auto rep = grad_check(f, in, 1e-5, 1e-6);
  CHECK(rep.pass);
}

TEST_CASE("sigmoid fixtures") {
  Tape tape;
  Var x = tape.constant(Tensor::row({0.0, 1.0}));
  const Tensor& y = sigmoid(x).val();
  CHECK(y.at(0, 0) == 0.5);
  CHECK(y.at(0, 1) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("row-gate broadcast scales rows") {
  Tape tape;
  Var alpha = tape.constant(Tensor::from_rows({{2}, {3}}));
  Var m = tape.constant(Tensor::from_rows({{1, 2, 3}, {4, 5, 6}}));
  const Tensor& z = mul(alpha, m).val();
  CHECK(z.shape == Shape{2, 3});
  CHECK(z.at(0, 2) == 6.0);
  CHECK(z.at(1, 0) == 12.0);
}

TEST_CASE("broadcast rejects incompatible shapes") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({4, 1}));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  Var c = tape.constant(Tensor({3}));
  CHECK_THROWS_AS(add(a, c), ShapeError);  // no rank promotion
}

TEST_CASE("softmax fixtures") {
  Tape tape;
  SUBCASE("equal logits") {
    const Tensor& p = softmax(tape.constant(Tensor::row({0.3, 0.3, 0.3})), 1).val();
    for (double v : p.values) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  SUBCASE("[2,1,0]") {
    const Tensor& p = softmax(tape.constant(Tensor::row({2, 1, 0})), 1).val();
    CHECK(p.at(0, 0) == doctest::Approx(0.6652409557748219).epsilon(1e-10));
    CHECK(p.at(0, 1) == doctest::Approx(0.24472847105479764).epsilon(1e-10));
    CHECK(p.at(0, 2) == doctest::Approx(0.09003057317038046).epsilon(1e-10));
  }
  SUBCASE("-inf sentinel maps to exactly zero") {
    const Tensor& p = softmax(tape.constant(Tensor::row({2, 1, -kInf})), 1).val();
    CHECK(p.at(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(p.at(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
    CHECK(p.at(0, 2) == 0.0);
  }
  SUBCASE("fully masked lane raises") {
    CHECK_THROWS_AS(softmax(tape.constant(Tensor::row({-kInf, -kInf})), 1), MaskError);
  }
}

TEST_CASE("softmax sums to one and is permutation equivariant") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = static_cast<int>(rng.uniform_int(2, 8));
    Tensor x = randt({1, n}, rng, 2.0);
    Tape tape;
    const Tensor& p = softmax(tape.constant(x), 1).val();
    double sum = 0;
    for (double v : p.values) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    Tensor xp({1, n});
    for (int i = 0; i < n; ++i) xp.values[static_cast<std::size_t>(i)] = x.values[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    const Tensor& pp = softmax(tape.constant(xp), 1).val();
    for (int i = 0; i < n; ++i)
      CHECK(pp.values[static_cast<std::size_t>(i)] ==
            doctest::Approx(p.values[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]).epsilon(1e-14));
  }
}

TEST_CASE("reduce, concat, affine fixtures") {
  Tape tape;
  const Tensor& m = reduce_mean(tape.constant(Tensor::from_rows({{1, 3}, {3, 5}})), 0).val();
  CHECK(m.shape == Shape{1, 2});
  CHECK(m.at(0, 0) == 2.0);
  CHECK(m.at(0, 1) == 4.0);

  Var a = tape.constant(Tensor({4, 3}));
  Var b = tape.constant(Tensor({4, 2}));
  CHECK(concat({a, b}, 1).shape() == Shape{4, 5});

  Rng rng(3);
  Var x = tape.constant(randt({3, 4}, rng));
  Var w = tape.constant(Tensor({4, 2}));
  Var bias = tape.constant(Tensor::row({0.7, -0.3}));
  const Tensor& y = affine(x, w, bias).val();
  for (int i = 0; i < 3; ++i) {
    CHECK(y.at(i, 0) == 0.7);
    CHECK(y.at(i, 1) == -0.3);
  }
  CHECK_THROWS_AS(reduce_sum(x, 2), ShapeError);
}

TEST_CASE("grad_check fixtures") {
  Rng rng(5);
  SUBCASE("sum of sigmoid") {
    std::vector<Tensor> in{randt({4, 3}, rng)};
    auto f = [](Tape&, std::span<const Var> v) { return reduce_sum(reduce_sum(sigmoid(v[0]), 0), 1); };
    const auto rep = grad_check(f, in, 1e-5, 1e-6);
    CHECK(rep.pass);
    CHECK(rep.coords_checked == 12);
  }
  SUBCASE("sum has exactly unit gradient") {
    Tape tape;
    Var x = tape.leaf(randt({3, 3}, rng).with_grad());
    tape.backward(reduce_sum(reduce_sum(x, 0), 1));
    for (double g : tape.grad(x)) CHECK(g == 1.0);
  }
  SUBCASE("gate plus router style subgraph at 1e-4") {
    std::vector<Tensor> in{randt({3, 4}, rng), randt({3, 4}, rng), randt({8, 1}, rng), randt({1, 1}, rng),
                           randt({4, 3}, rng)};
    auto f = [](Tape& tp, std::span<const Var> v) {
      Var both = concat({v[0], v[1]}, 1);
      Var alpha = sigmoid(affine(both, v[2], v[3]));
      Var fused = v[0] + alpha * (v[1] - v[0]);
      Var logits = matmul(fused, v[4]);
      Var pi = softmax(logits, 1);
      return reduce_sum(reduce_sum(mul(pi, tp.constant(Tensor::full({3, 3}, 0.37))), 0), 1);
    };
    CHECK(grad_check(f, in, 1e-5, 1e-4).pass);
  }
}

TEST_CASE("gradient additivity across two paths") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({1.5, -2.0}).with_grad());
  Var y = x + x;  // two paths to the same leaf
  tape.backward(reduce_sum(reduce_sum(y, 0), 1));
  for (double g : tape.grad(x)) CHECK(g == 2.0);
}

TEST_CASE("seeded computation is bit-identical across runs") {
  auto run = [](std::vector<double>& values, std::vector<double>& grads) {
    Rng rng(99);
    Tape tape;
    Var x = tape.leaf(randt({4, 4}, rng).with_grad());
    Var w = tape.leaf(randt({4, 4}, rng).with_grad());
    Var y = softmax(tanh(matmul(x, w)), 1);
    Var loss = reduce_sum(reduce_sum(mul(y, y), 0), 1);
    tape.backward(loss);
    values.assign(y.val().values.begin(), y.val().values.end());
    auto g = tape.grad(w);
    grads.assign(g.begin(), g.end());
  };
  std::vector<double> v1, g1, v2, g2;
  run(v1, g1);
  run(v2, g2);
  CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("tape inputs are never mutated by ops or backward") {
  Rng rng(13);
  Tensor x = randt({3, 3}, rng);
  const std::vector<double> snapshot = x.values;
  Tape tape;
  Var vx = tape.leaf(x.with_grad());
  Var y = relu(matmul(vx, vx));
  tape.backward(reduce_sum(reduce_sum(y, 0), 1));
  CHECK(tape.value(vx).values == snapshot);
  CHECK(x.values == snapshot);
}

TEST_CASE("non-finite guard flags log domain issues") {
  Tape guarded(true);
  Var bad = guarded.constant(Tensor::row({-1.0}));
  CHECK_THROWS_AS(log(bad), NonFiniteError);
  Tape unguarded(false);
  Var bad2 = unguarded.constant(Tensor::row({-1.0}));
  CHECK(std::isnan(log(bad2).val().at(0, 0)));
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}).with_grad());
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

}  // TEST_SUITE

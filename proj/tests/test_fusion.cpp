// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "hfl/fusion.hpp"

using namespace hfl;

namespace {
Tensor randt(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (auto& v : t.values) v = scale * rng.gaussian();
  return t;
}

ModalPair make_pair_data(int l, int d, Rng& rng) {
  ModalPair p;
  p.modality = Modality::T;
  p.content = randt({l, d}, rng);
  p.hotspot = randt({l, d}, rng);
  return p;
}
}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("zero gate parameters give the midpoint") {
  Tape tape;
  Var c = tape.constant(Tensor::from_rows({{2, 0}}));
  Var h = tape.constant(Tensor::from_rows({{4, 2}}));
  Var w = tape.constant(Tensor({4, 1}));
  Var b = tape.constant(Tensor({1, 1}));
  GateResult g = hgf_gate_vars(c, h, w, b);
  CHECK(g.alpha.val().at(0, 0) == 0.5);
  CHECK(g.fused.val().at(0, 0) == 3.0);
  CHECK(g.fused.val().at(0, 1) == 1.0);
}

TEST_CASE("large negative pre-activation saturates to content") {
  Tape tape;
  Var c = tape.constant(Tensor::from_rows({{1.0, -2.0}}));
  Var h = tape.constant(Tensor::from_rows({{3.0, 1.0}}));
  Var w = tape.constant(Tensor({4, 1}));
  Var b = tape.constant(Tensor::scalar(-20.0));
  GateResult g = hgf_gate_vars(c, h, w, b);
  CHECK(g.fused.val().at(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(g.fused.val().at(0, 1) == doctest::Approx(-2.0).epsilon(1e-8));
}

TEST_CASE("unit pre-activation fixture") {
  // Weights zero, bias 1: alpha = sigmoid(1); C=[1,0], H=[3,2].
  Tape tape;
  Var c = tape.constant(Tensor::from_rows({{1, 0}}));
  Var h = tape.constant(Tensor::from_rows({{3, 2}}));
  Var w = tape.constant(Tensor({4, 1}));
  Var b = tape.constant(Tensor::scalar(1.0));
  GateResult g = hgf_gate_vars(c, h, w, b);
  CHECK(g.alpha.val().at(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(g.fused.val().at(0, 0) == doctest::Approx(2.4621171572600096).epsilon(1e-12));
  CHECK(g.fused.val().at(0, 1) == doctest::Approx(1.4621171572600098).epsilon(1e-12));
}

TEST_CASE("fused rows stay inside the content/hotspot envelope") {
  Rng rng(31);
  for (int rep = 0; rep < 200; ++rep) {
    const int l = static_cast<int>(rng.uniform_int(1, 5));
    const int d = static_cast<int>(rng.uniform_int(1, 6));
    ModalPair pair = make_pair_data(l, d, rng);
    Tape tape;
    GateResult g = hgf_gate_vars(tape.constant(pair.content), tape.constant(pair.hotspot),
                                 tape.constant(randt({2 * d, 1}, rng)), tape.constant(randt({1, 1}, rng)));
    const Tensor& z = g.fused.val();
    const Tensor& a = g.alpha.val();
    CHECK(a.shape == Shape{l, 1});
    for (int t = 0; t < l; ++t) {
      CHECK(a.at(t, 0) > 0.0);
      CHECK(a.at(t, 0) < 1.0);
      for (int j = 0; j < d; ++j) {
        const double lo = std::min(pair.content.at(t, j), pair.hotspot.at(t, j));
        const double hi = std::max(pair.content.at(t, j), pair.hotspot.at(t, j));
        CHECK(z.at(t, j) >= lo);
        CHECK(z.at(t, j) <= hi);
      }
    }
  }
}

TEST_CASE("identical content and hotspot pass through exactly") {
  Rng rng(32);
  ModalPair pair;
  pair.content = randt({4, 3}, rng);
  pair.hotspot = pair.content;
  Tape tape;
  GateResult g = hgf_gate_vars(tape.constant(pair.content), tape.constant(pair.hotspot),
                               tape.constant(randt({6, 1}, rng, 3.0)), tape.constant(randt({1, 1}, rng)));
  CHECK(g.fused.val().values == pair.content.values);
}

TEST_CASE("gate is token-wise: row permutation permutes outputs") {
  Rng rng(33);
  const int l = 5, d = 3;
  ModalPair pair = make_pair_data(l, d, rng);
  Tensor w = randt({2 * d, 1}, rng);
  Tensor b = randt({1, 1}, rng);
  const int order[5] = {4, 2, 0, 1, 3};
  ModalPair permuted;
  permuted.content = Tensor({l, d});
  permuted.hotspot = Tensor({l, d});
  for (int t = 0; t < l; ++t)
    for (int j = 0; j < d; ++j) {
      permuted.content.at(t, j) = pair.content.at(order[t], j);
      permuted.hotspot.at(t, j) = pair.hotspot.at(order[t], j);
    }
  Tape tape;
  GateResult g1 = hgf_gate_vars(tape.constant(pair.content), tape.constant(pair.hotspot), tape.constant(w),
                                tape.constant(b));
  GateResult g2 = hgf_gate_vars(tape.constant(permuted.content), tape.constant(permuted.hotspot), tape.constant(w),
                                tape.constant(b));
  for (int t = 0; t < l; ++t) {
    CHECK(g2.alpha.val().at(t, 0) == g1.alpha.val().at(order[t], 0));
    for (int j = 0; j < d; ++j) CHECK(g2.fused.val().at(t, j) == g1.fused.val().at(order[t], j));
  }
}

TEST_CASE("alpha is constant across features: delta is proportional to hotspot minus content") {
  Rng rng(34);
  ModalPair pair = make_pair_data(3, 4, rng);
  Tape tape;
  GateResult g = hgf_gate_vars(tape.constant(pair.content), tape.constant(pair.hotspot),
                               tape.constant(randt({8, 1}, rng)), tape.constant(randt({1, 1}, rng)));
  const Tensor& z = g.fused.val();
  const Tensor& a = g.alpha.val();
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < 4; ++j)
      CHECK(z.at(t, j) - pair.content.at(t, j) ==
            doctest::Approx(a.at(t, 0) * (pair.hotspot.at(t, j) - pair.content.at(t, j))).epsilon(1e-12));
}

TEST_CASE("gate gradients match finite differences at 1e-5") {
  Rng rng(35);
  std::vector<Tensor> in{randt({3, 4}, rng), randt({3, 4}, rng), randt({8, 1}, rng), randt({1, 1}, rng)};
  Tensor r = randt({3, 4}, rng);
  auto f = [&](Tape& tp, std::span<const Var> v) {
    GateResult g = hgf_gate_vars(v[0], v[1], v[2], v[3]);
    return reduce_sum(reduce_sum(mul(g.fused, tp.constant(r)), 0), 1);
  };
  CHECK(grad_check(f, in, 1e-5, 1e-5).pass);
}

TEST_CASE("encode_modality shapes and residual identity") {
  Rng rng(36);
  ParamStore ps;
  EncoderParams enc = make_encoder(ps, "enc", 5, 8, 2, 12, rng);
  {
    Tape tape;
    Binding bind(tape, ps);
    CHECK(encode_modality(tape.constant(randt({1, 5}, rng)), enc, bind).shape() == Shape{1, 8});
  }
  for (ParamId id : {enc.block.attn.wo, enc.block.attn.bo, enc.block.ffn.w2, enc.block.ffn.b2})
    for (auto& v : ps.tensor(id).values) v = 0.0;
  Tape tape;
  Binding bind(tape, ps);
  Var z = tape.constant(randt({4, 5}, rng));
  const Tensor& projected = affine(z, bind[enc.proj_w], bind[enc.proj_b]).val();
  CHECK(encode_modality(z, enc, bind).val().values == projected.values);
}

TEST_CASE("ablation bypass returns content and ignores hotspots") {
  Rng rng(37);
  ModalPair pair = make_pair_data(4, 3, rng);
  Tape tape;
  Var z1 = ablation_bypass(tape, pair);
  CHECK(z1.val().values == pair.content.values);
  for (auto& v : pair.hotspot.values) v += 100.0;
  Var z2 = ablation_bypass(tape, pair);
  CHECK(z2.val().values == z1.val().values);
}

TEST_CASE("mismatched content/hotspot shapes are rejected") {
  Tape tape;
  Var c = tape.constant(Tensor({3, 4}));
  Var h = tape.constant(Tensor({3, 5}));
  CHECK_THROWS_AS(hgf_gate_vars(c, h, c, c), ShapeError);
}

}  // TEST_SUITE

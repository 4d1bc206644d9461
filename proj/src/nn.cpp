// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/nn.hpp"

#include <cmath>
#include <limits>

namespace hfl {

Tensor glorot(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (auto& v : t.values) v = rng.uniform(-limit, limit);
  return t;
}

AttentionParams make_attention(ParamStore& ps, const std::string& prefix, int width, int head_count, Rng& rng) {
  if (head_count <= 0 || width % head_count != 0)
    throw ShapeError("attention width " + std::to_string(width) + " not divisible by " +
                     std::to_string(head_count) + " heads");
  AttentionParams p;
  p.head_count = head_count;
  p.wq = ps.add(prefix + ".wq", glorot(width, width, rng));
  p.bq = ps.add(prefix + ".bq", Tensor({1, width}));
  p.wk = ps.add(prefix + ".wk", glorot(width, width, rng));
  p.bk = ps.add(prefix + ".bk", Tensor({1, width}));
  p.wv = ps.add(prefix + ".wv", glorot(width, width, rng));
  p.bv = ps.add(prefix + ".bv", Tensor({1, width}));
  p.wo = ps.add(prefix + ".wo", glorot(width, width, rng));
  p.bo = ps.add(prefix + ".bo", Tensor({1, width}));
  return p;
}

FeedForwardParams make_feed_forward(ParamStore& ps, const std::string& prefix, int width, int inner, Rng& rng,
                                    Activation act) {
  FeedForwardParams p;
  p.act = act;
  p.w1 = ps.add(prefix + ".w1", glorot(width, inner, rng));
  p.b1 = ps.add(prefix + ".b1", Tensor({1, inner}));
  p.w2 = ps.add(prefix + ".w2", glorot(inner, width, rng));
  p.b2 = ps.add(prefix + ".b2", Tensor({1, width}));
  return p;
}

NormParams make_norm(ParamStore& ps, const std::string& prefix, int width) {
  NormParams p;
  p.scale = ps.add(prefix + ".scale", Tensor::full({1, width}, 1.0));
  p.shift = ps.add(prefix + ".shift", Tensor({1, width}));
  return p;
}

BlockParams make_block(ParamStore& ps, const std::string& prefix, int width, int head_count, int inner, Rng& rng) {
  BlockParams p;
  p.attn = make_attention(ps, prefix + ".attn", width, head_count, rng);
  p.ffn = make_feed_forward(ps, prefix + ".ffn", width, inner, rng);
  p.norm1 = make_norm(ps, prefix + ".norm1", width);
  p.norm2 = make_norm(ps, prefix + ".norm2", width);
  return p;
}

Var attention(Var query_seq, Var key_value_seq, const AttentionParams& p, Binding& bind,
              const std::vector<std::vector<bool>>* mask) {
  const int h = query_seq.shape().extent(1);
  Var q = affine(query_seq, bind[p.wq], bind[p.bq]);
  Var k = affine(key_value_seq, bind[p.wk], bind[p.bk]);
  Var v = affine(key_value_seq, bind[p.wv], bind[p.bv]);
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(h / p.head_count));

  Var core;
  if (mask) {
    const int lq = query_seq.shape().extent(0);
    const int lk = key_value_seq.shape().extent(0);
    if (static_cast<int>(mask->size()) != lq)
      throw ShapeError("attention: mask rows " + std::to_string(mask->size()) + " vs queries " + std::to_string(lq));
    Tensor add_mask({lq, lk});
    for (int i = 0; i < lq; ++i) {
      const auto& row = (*mask)[static_cast<std::size_t>(i)];
      if (static_cast<int>(row.size()) != lk)
        throw ShapeError("attention: mask cols vs keys mismatch at row " + std::to_string(i));
      for (int j = 0; j < lk; ++j)
        add_mask.at(i, j) = row[static_cast<std::size_t>(j)] ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    core = mha_core(q, k, v, p.head_count, att_scale, &add_mask);
  } else {
    core = mha_core(q, k, v, p.head_count, att_scale);
  }
  return affine(core, bind[p.wo], bind[p.bo]);
}

Var feed_forward(Var x, const FeedForwardParams& p, Binding& bind) {
  Var inner = affine(x, bind[p.w1], bind[p.b1]);
  inner = (p.act == Activation::Tanh) ? tanh(inner) : relu(inner);
  return affine(inner, bind[p.w2], bind[p.b2]);
}

Var encoder_block(Var x, const BlockParams& p, Binding& bind) {
  Var normed = layer_norm(x, bind[p.norm1.scale], bind[p.norm1.shift]);
  Var mid = x + attention(normed, normed, p.attn, bind);
  Var normed2 = layer_norm(mid, bind[p.norm2.scale], bind[p.norm2.shift]);
  return mid + feed_forward(normed2, p.ffn, bind);
}

Var cross_block(Var target, Var source, const BlockParams& p, Binding& bind) {
  Var normed = layer_norm(target, bind[p.norm1.scale], bind[p.norm1.shift]);
  Var mid = target + attention(normed, source, p.attn, bind);
  Var normed2 = layer_norm(mid, bind[p.norm2.scale], bind[p.norm2.shift]);
  return mid + feed_forward(normed2, p.ffn, bind);
}

}  // namespace hfl

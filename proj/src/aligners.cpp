// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/aligners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hfl {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

std::string pair_name(const OrderedPair& p) {
  return std::string(modality_name(p.target)) + "<-" + modality_name(p.source);
}

std::vector<int> topk_keep_set(std::span<const double> logits, int k) {
  const int e = static_cast<int>(logits.size());
  for (double v : logits)
    if (!std::isfinite(v)) throw RoutingError("topk: non-finite logit");
  if (k < 1) throw RoutingError("topk: K must be >= 1, got " + std::to_string(k));
  std::vector<int> order(static_cast<std::size_t>(e));
  std::iota(order.begin(), order.end(), 0);
  // Sort by (value desc, index asc): equal K-th values keep the lowest index.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(std::min(k, e)));
  std::sort(order.begin(), order.end());
  return order;
}

RoutingDecision topk_mask_softmax(const Tensor& logits, int k) {
  RoutingDecision d;
  d.logits = logits;
  d.kept = topk_keep_set(logits.values, k);
  d.weights = Tensor(logits.shape);
  const auto n = logits.values.size();
  if (d.kept.size() == n) {
    softmax_span(logits.values, d.weights.values);
    return d;
  }
  std::vector<double> masked(logits.values);
  std::vector<bool> keep(n, false);
  for (int i : d.kept) keep[static_cast<std::size_t>(i)] = true;
  for (std::size_t i = 0; i < n; ++i)
    if (!keep[i]) masked[i] = kNegInf;
  softmax_span(masked, d.weights.values);
  return d;
}

PairParams make_pair_params(ParamStore& ps, const std::string& prefix, int width, int head_count, int inner,
                            int expert_count, Rng& rng) {
  PairParams p;
  for (int e = 0; e < expert_count; ++e) {
    ExpertParams ep;
    const std::string eprefix = prefix + ".expert" + std::to_string(e);
    ep.attn = make_attention(ps, eprefix + ".attn", width, head_count, rng);
    ep.ffn = make_feed_forward(ps, eprefix + ".ffn", width, inner, rng);
    p.experts.push_back(ep);
  }
  p.router.weight = ps.add(prefix + ".router.weight", glorot(2 * width, expert_count, rng));
  p.router.bias = ps.add(prefix + ".router.bias", Tensor({1, expert_count}));
  p.cross = make_block(ps, prefix + ".cross", width, head_count, inner, rng);
  return p;
}

namespace {

// logits (rows x E) -> masked softmax with per-row TopK kept sets.
SequenceRouting masked_routing(Var logits, int k) {
  const Tensor& lv = logits.val();
  const int rows = lv.rows(), e = lv.cols();
  SequenceRouting r;
  Tensor mask({rows, e});
  bool any_masked = false;
  for (int t = 0; t < rows; ++t) {
    std::span<const double> row{lv.values.data() + static_cast<std::ptrdiff_t>(t) * e,
                                static_cast<std::size_t>(e)};
    auto kept = topk_keep_set(row, k);
    if (static_cast<int>(kept.size()) < e) {
      any_masked = true;
      std::vector<bool> keep(static_cast<std::size_t>(e), false);
      for (int i : kept) keep[static_cast<std::size_t>(i)] = true;
      for (int j = 0; j < e; ++j)
        if (!keep[static_cast<std::size_t>(j)]) mask.at(t, j) = kNegInf;
    }
    r.kept.push_back(std::move(kept));
  }
  r.pi = softmax(logits, 1, any_masked ? &mask : nullptr);
  return r;
}

Var router_logits(Var target_seq, Var source_seq, const RouterParams& p, Binding& bind) {
  const int l = target_seq.shape().extent(0);
  Var pooled = reduce_mean(source_seq, 0);  // 1 x h
  Var tiled = (l == 1) ? pooled : mul(target_seq.tape->constant(Tensor::full({l, 1}, 1.0)), pooled);
  Var joint = concat({target_seq, tiled}, 1);  // L x 2h
  return affine(joint, bind[p.weight], bind[p.bias]);
}

}  // namespace

TapeRouting route_utterance(Var target_seq, Var source_seq, int t, const RouterParams& p, int k, Binding& bind) {
  const int l = target_seq.shape().extent(0);
  if (t < 0 || t >= l)
    throw RoutingError("route_utterance: index " + std::to_string(t) + " out of range for length " +
                       std::to_string(l));
  Var target_row = slice(target_seq, 0, t, 1);
  Var logits = router_logits(target_row, source_seq, p, bind);
  SequenceRouting r = masked_routing(logits, k);
  return TapeRouting{logits, r.pi, r.kept[0]};
}

SequenceRouting route_sequence(Var target_seq, Var source_seq, const RouterParams& p, int k, Binding& bind) {
  return masked_routing(router_logits(target_seq, source_seq, p, bind), k);
}

AlignResult align_pair(Var target_seq, Var source_seq, const PairParams& p, int k, Binding& bind) {
  SequenceRouting routing = route_sequence(target_seq, source_seq, p.router, k, bind);
  // All experts are evaluated densely; mixing weights carry exact zeros off
  // the kept set, so only selected experts reach the output or gradients.
  // Each expert keeps the target stream as a residual anchor, so the convex
  // mixture stays anchored on X_j and experts learn alignment corrections.
  Var mixed;
  for (std::size_t e = 0; e < p.experts.size(); ++e) {
    Var attended = target_seq + attention(target_seq, source_seq, p.experts[e].attn, bind);
    Var expert_out = attended + feed_forward(attended, p.experts[e].ffn, bind);
    Var weighted = mul(slice(routing.pi, 1, static_cast<int>(e), 1), expert_out);
    mixed = e == 0 ? weighted : mixed + weighted;
  }
  AlignResult r;
  r.aligned = cross_block(mixed, source_seq, p.cross, bind);
  r.pi = routing.pi;
  r.kept = std::move(routing.kept);
  return r;
}

MemoryOutput build_memory(std::span<const Var> aligned_pairs,
                          const std::array<BlockParams, kModalityCount>& memory_blocks, Binding& bind) {
  if (aligned_pairs.size() != kPairCount)
    throw ShapeError("build_memory: expected " + std::to_string(kPairCount) + " aligned pairs, got " +
                     std::to_string(aligned_pairs.size()));
  MemoryOutput out;
  std::array<Var, kModalityCount> mems;
  for (int j = 0; j < kModalityCount; ++j) {
    std::vector<Var> sources;
    for (int idx = 0; idx < kPairCount; ++idx)
      if (static_cast<int>(kOrderedPairs[static_cast<std::size_t>(idx)].target) == j)
        sources.push_back(aligned_pairs[static_cast<std::size_t>(idx)]);
    Var cat = concat(std::span<const Var>(sources.data(), sources.size()), 1);  // L x 2h
    mems[static_cast<std::size_t>(j)] = encoder_block(cat, memory_blocks[static_cast<std::size_t>(j)], bind);
  }
  out.memory = mems;
  out.combined = concat({mems[0], mems[1], mems[2]}, 1);  // L x 6h
  return out;
}

void UsageAccumulator::observe(std::span<const double> pi_row, std::span<const int> kept) {
  if (pi_sum.empty()) {
    pi_sum.assign(pi_row.size(), 0.0);
    kept_count.assign(pi_row.size(), 0);
  }
  if (pi_row.size() != pi_sum.size()) throw RoutingError("usage accumulator: expert count changed");
  for (std::size_t i = 0; i < pi_row.size(); ++i) pi_sum[i] += pi_row[i];
  for (int i : kept) ++kept_count[static_cast<std::size_t>(i)];
  ++routed;
}

void UsageAccumulator::merge(const UsageAccumulator& other) {
  if (other.routed == 0) return;
  if (pi_sum.empty()) {
    pi_sum.assign(other.pi_sum.size(), 0.0);
    kept_count.assign(other.pi_sum.size(), 0);
  }
  for (std::size_t i = 0; i < pi_sum.size(); ++i) {
    pi_sum[i] += other.pi_sum[i];
    kept_count[i] += other.kept_count[i];
  }
  routed += other.routed;
}

std::vector<double> UsageAccumulator::usage() const {
  std::vector<double> u(pi_sum.size(), 0.0);
  if (routed == 0) return u;
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = pi_sum[i] / static_cast<double>(routed);
  return u;
}

double load_balance_value(std::span<const double> usage) {
  double h = 0.0;
  for (double u : usage)
    if (u > 0.0) h += u * std::log(u);
  return h + std::log(static_cast<double>(usage.size()));
}

double load_balance_value(const UsageAccumulator& acc) {
  const auto u = acc.usage();
  return load_balance_value(u);
}

Var load_balance_loss(Var pi) {
  Tape& tape = *pi.tape;
  const int e = pi.shape().extent(1);
  Var u = reduce_mean(pi, 0);  // 1 x E
  const Tensor& uv = u.val();
  Var acc;
  bool have = false;
  for (int i = 0; i < e; ++i) {
    if (uv.values[static_cast<std::size_t>(i)] <= 0.0) continue;  // 0 log 0 = 0
    Var ue = slice(u, 1, i, 1);
    Var term = ue * log(ue);
    acc = have ? acc + term : term;
    have = true;
  }
  Var log_e = tape.scalar_const(std::log(static_cast<double>(e)));
  return have ? acc + log_e : log_e;
}

}  // namespace hfl

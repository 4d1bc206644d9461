// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/fusion.hpp"

namespace hfl {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::T: return "T";
    case Modality::A: return "A";
    case Modality::V: return "V";
  }
  return "?";
}

GateParams make_gate(ParamStore& ps, const std::string& prefix, int feature_dim, Rng& rng) {
  GateParams p;
  p.weight = ps.add(prefix + ".weight", glorot(2 * feature_dim, 1, rng));
  // Zero bias puts the gate at 0.5, midway between content and hotspot.
  p.bias = ps.add(prefix + ".bias", Tensor({1, 1}));
  return p;
}

EncoderParams make_encoder(ParamStore& ps, const std::string& prefix, int in_dim, int width, int head_count,
                           int inner, Rng& rng) {
  EncoderParams p;
  p.proj_w = ps.add(prefix + ".proj_w", glorot(in_dim, width, rng));
  p.proj_b = ps.add(prefix + ".proj_b", Tensor({1, width}));
  p.block = make_block(ps, prefix + ".block", width, head_count, inner, rng);
  return p;
}

GateResult hgf_gate_vars(Var content, Var hotspot, Var weight, Var bias) {
  if (content.shape() != hotspot.shape())
    throw ShapeError("hgf_gate: content " + content.shape().str() + " vs hotspot " + hotspot.shape().str());
  Var both = concat({content, hotspot}, 1);
  GateResult r;
  r.alpha = sigmoid(affine(both, weight, bias));
  r.fused = content + r.alpha * (hotspot - content);
  return r;
}

GateResult hgf_gate(Tape& tape, const ModalPair& pair, const GateParams& p, Binding& bind) {
  return hgf_gate_vars(tape.constant(pair.content), tape.constant(pair.hotspot), bind[p.weight], bind[p.bias]);
}

Var encode_modality(Var fused, const EncoderParams& p, Binding& bind) {
  Var projected = affine(fused, bind[p.proj_w], bind[p.proj_b]);
  return encoder_block(projected, p.block, bind);
}

Var ablation_bypass(Tape& tape, const ModalPair& pair) { return tape.constant(pair.content); }

}  // namespace hfl

// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Full forward pass: gated fusion -> per-modality encoders -> mixture of
// aligners in parallel with the conversation graph -> token-level classifier,
// plus the combined training loss.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hfl/aligners.hpp"
#include "hfl/data.hpp"
#include "hfl/graph.hpp"
#include "hfl/metrics.hpp"

namespace hfl {

enum class AblationMode : int { Baseline = 0, Hgf = 1, Full = 2 };

const char* ablation_name(AblationMode m);           // baseline | hgf | hgf+moa
AblationMode parse_ablation(const std::string& s);

struct ModelConfig {
  int dim_t = 16, dim_a = 16, dim_v = 16;
  int hidden = 32;
  int heads = 4;
  int ffn_inner = 64;
  int experts = 4;
  int topk = 2;
  double lb_weight = 0.01;  // lambda
  int classes = 6;
  AblationMode ablation = AblationMode::Full;
  GraphConfig graph;

  int dim(Modality m) const {
    switch (m) {
      case Modality::T: return dim_t;
      case Modality::A: return dim_a;
      case Modality::V: return dim_v;
    }
    return 0;
  }
  bool uses_gates() const { return ablation != AblationMode::Baseline; }
  bool uses_moa() const { return ablation == AblationMode::Full; }
  // Classifier input width: graph pathway (3h) plus, in full mode, the
  // modality memory (6h).
  int representation_width() const {
    return kModalityCount * hidden + (uses_moa() ? 2 * kModalityCount * hidden : 0);
  }
  void validate() const;
};

struct LossBreakdown {
  double task = 0.0;
  double lb = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct Forward {
    Var logits;  // L x C
    Var lb;      // load-balancing term; valid only in full mode
    std::array<Tensor, kModalityCount> gate_alpha;  // values, empty in baseline mode
    std::vector<UsageAccumulator> usage;            // per ordered pair (full mode)
  };

  Forward forward(Tape& tape, Binding& bind, const DialogueSample& dialogue) const;

  // Convenience: forward on a fresh tape, returning predicted labels.
  std::vector<int> predict(const DialogueSample& dialogue) const;

  void check_dialogue(const DialogueSample& d) const;

 private:
  const GraphPlan& graph_plan(int length) const;

  ModelConfig cfg_;
  ParamStore params_;
  std::array<GateParams, kModalityCount> gates_{};
  std::array<EncoderParams, kModalityCount> encoders_{};
  std::array<PairParams, kPairCount> moa_{};
  std::array<BlockParams, kModalityCount> memory_{};
  RgnnParams rgnn_;
  ParamId cls_w_{}, cls_b_{};
  // Edge lists depend only on the dialogue length; a Model is used from one
  // thread at a time, matching the single-threaded tape discipline.
  mutable std::map<int, GraphPlan> plans_;
};

// Mean over utterances of -w_y log p(y | row); class weights, when given,
// normalize by the sum of the weights of the true labels.
Var task_loss(Var logits, const std::vector<int>& labels, const std::vector<double>* class_weights = nullptr);

struct TotalLoss {
  Var total;
  LossBreakdown parts;
};

// total = task + lambda * lb; the lb term is forced to 0 when `lb` is not a
// valid node (MoA disabled).
TotalLoss total_loss(Var task, Var lb, double lambda);

std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace hfl

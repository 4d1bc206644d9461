// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/model.hpp"

#include <algorithm>
#include <cmath>

namespace hfl {

const char* ablation_name(AblationMode m) {
  switch (m) {
    case AblationMode::Baseline: return "baseline";
    case AblationMode::Hgf: return "hgf";
    case AblationMode::Full: return "hgf+moa";
  }
  return "?";
}

AblationMode parse_ablation(const std::string& s) {
  if (s == "baseline") return AblationMode::Baseline;
  if (s == "hgf") return AblationMode::Hgf;
  if (s == "hgf+moa" || s == "full") return AblationMode::Full;
  throw ConfigError("unknown ablation mode '" + s + "' (baseline | hgf | hgf+moa)");
}

void ModelConfig::validate() const {
  if (dim_t <= 0 || dim_a <= 0 || dim_v <= 0) throw ConfigError("modality dims must be positive");
  if (hidden <= 0 || heads <= 0 || hidden % heads != 0)
    throw ConfigError("hidden width must be positive and divisible by heads");
  if ((2 * hidden) % heads != 0) throw ConfigError("memory width 2h must be divisible by heads");
  if (ffn_inner <= 0) throw ConfigError("ffn inner width must be positive");
  if (experts < 1) throw ConfigError("expert count must be >= 1");
  if (topk < 1) throw ConfigError("topk must be >= 1");
  if (lb_weight < 0) throw ConfigError("lambda must be >= 0");
  if (classes < 2) throw ConfigError("class count must be >= 2");
  if (graph.modalities != kModalityCount) throw ConfigError("graph must cover the 3 modalities");
  if (graph.layers < 1) throw ConfigError("gnn layer count must be >= 1");
}

namespace {
// Fixed per-component seed streams so shared components draw identical
// initial weights across ablation modes with the same seed.
enum : std::uint64_t { kStreamGates = 100, kStreamEncoders = 200, kStreamPairs = 300, kStreamMemory = 400,
                       kStreamGnn = 500, kStreamClassifier = 600 };
}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng root(seed);
  if (cfg_.uses_gates()) {
    for (int m = 0; m < kModalityCount; ++m) {
      Rng r = root.derive(kStreamGates + static_cast<std::uint64_t>(m));
      gates_[static_cast<std::size_t>(m)] = make_gate(
          params_, std::string("gate.") + modality_name(static_cast<Modality>(m)),
          cfg_.dim(static_cast<Modality>(m)), r);
    }
  }
  for (int m = 0; m < kModalityCount; ++m) {
    Rng r = root.derive(kStreamEncoders + static_cast<std::uint64_t>(m));
    encoders_[static_cast<std::size_t>(m)] = make_encoder(
        params_, std::string("encoder.") + modality_name(static_cast<Modality>(m)),
        cfg_.dim(static_cast<Modality>(m)), cfg_.hidden, cfg_.heads, cfg_.ffn_inner, r);
  }
  if (cfg_.uses_moa()) {
    for (int p = 0; p < kPairCount; ++p) {
      Rng r = root.derive(kStreamPairs + static_cast<std::uint64_t>(p));
      moa_[static_cast<std::size_t>(p)] =
          make_pair_params(params_, "moa." + pair_name(kOrderedPairs[static_cast<std::size_t>(p)]), cfg_.hidden,
                           cfg_.heads, cfg_.ffn_inner, cfg_.experts, r);
    }
    for (int j = 0; j < kModalityCount; ++j) {
      Rng r = root.derive(kStreamMemory + static_cast<std::uint64_t>(j));
      memory_[static_cast<std::size_t>(j)] =
          make_block(params_, std::string("memory.") + modality_name(static_cast<Modality>(j)), 2 * cfg_.hidden,
                     cfg_.heads, cfg_.ffn_inner, r);
    }
  }
  {
    Rng r = root.derive(kStreamGnn);
    const int relations = static_cast<int>(relation_table(cfg_.graph).size());
    rgnn_ = make_rgnn(params_, "gnn", relations, cfg_.hidden, cfg_.graph.layers, r);
  }
  {
    Rng r = root.derive(kStreamClassifier);
    cls_w_ = params_.add("classifier.weight", glorot(cfg_.representation_width(), cfg_.classes, r));
    cls_b_ = params_.add("classifier.bias", Tensor({1, cfg_.classes}));
  }
}

void Model::check_dialogue(const DialogueSample& d) const {
  const int l = d.length();
  if (l < 1) throw Error("dialogue " + std::to_string(d.id) + " has no utterances");
  for (Modality m : kModalities) {
    const ModalPair& p = d.track(m);
    const int dim = cfg_.dim(m);
    if (p.content.numel() == 0 || p.hotspot.numel() == 0)
      throw Error("dialogue " + std::to_string(d.id) + ": modality " + modality_name(m) + " missing");
    if (p.content.shape != Shape{l, dim} || p.hotspot.shape != Shape{l, dim})
      throw ShapeError("dialogue " + std::to_string(d.id) + ": modality " + modality_name(m) + " expects " +
                       Shape{l, dim}.str() + ", got " + p.content.shape.str() + " / " + p.hotspot.shape.str());
  }
  for (int y : d.labels)
    if (y < 0 || y >= cfg_.classes)
      throw Error("dialogue " + std::to_string(d.id) + ": label " + std::to_string(y) + " outside [0, " +
                  std::to_string(cfg_.classes) + ")");
}

const GraphPlan& Model::graph_plan(int length) const {
  auto it = plans_.find(length);
  if (it == plans_.end()) it = plans_.emplace(length, GraphPlan::make(build_graph(length, cfg_.graph))).first;
  return it->second;
}

Model::Forward Model::forward(Tape& tape, Binding& bind, const DialogueSample& dialogue) const {
  check_dialogue(dialogue);
  Forward out;

  std::array<Var, kModalityCount> encoded;
  for (int m = 0; m < kModalityCount; ++m) {
    const ModalPair& pair = dialogue.modalities[static_cast<std::size_t>(m)];
    Var fused;
    if (cfg_.uses_gates()) {
      GateResult g = hgf_gate(tape, pair, gates_[static_cast<std::size_t>(m)], bind);
      out.gate_alpha[static_cast<std::size_t>(m)] = g.alpha.val();
      fused = g.fused;
    } else {
      fused = ablation_bypass(tape, pair);
    }
    encoded[static_cast<std::size_t>(m)] = encode_modality(fused, encoders_[static_cast<std::size_t>(m)], bind);
  }

  // Graph pathway.
  Var node_features = concat({encoded[0], encoded[1], encoded[2]}, 0);
  const GraphPlan& plan = graph_plan(dialogue.length());
  Var gnn_nodes = rgnn_forward(node_features, plan, rgnn_, bind);
  Var graph_repr = multi_concat(gnn_nodes, dialogue.length(), kModalityCount);

  Var repr = graph_repr;
  if (cfg_.uses_moa()) {
    std::array<Var, kPairCount> aligned;
    Var lb_sum;
    for (int p = 0; p < kPairCount; ++p) {
      const OrderedPair& op = kOrderedPairs[static_cast<std::size_t>(p)];
      AlignResult r = align_pair(encoded[static_cast<std::size_t>(op.target)],
                                 encoded[static_cast<std::size_t>(op.source)],
                                 moa_[static_cast<std::size_t>(p)], cfg_.topk, bind);
      aligned[static_cast<std::size_t>(p)] = r.aligned;
      Var lb_p = load_balance_loss(r.pi);
      lb_sum = p == 0 ? lb_p : lb_sum + lb_p;
      UsageAccumulator acc(cfg_.experts);
      const Tensor& pi = r.pi.val();
      for (int t = 0; t < pi.rows(); ++t)
        acc.observe({pi.values.data() + static_cast<std::ptrdiff_t>(t) * pi.cols(),
                     static_cast<std::size_t>(pi.cols())},
                    r.kept[static_cast<std::size_t>(t)]);
      out.usage.push_back(std::move(acc));
    }
    // Averaged over the 6 routers so lambda is independent of modality count.
    out.lb = scale(lb_sum, 1.0 / kPairCount);
    MemoryOutput mem = build_memory(std::span<const Var>(aligned.data(), aligned.size()), memory_, bind);
    repr = concat({mem.combined, graph_repr}, 1);
  }

  out.logits = affine(repr, bind[cls_w_], bind[cls_b_]);
  return out;
}

std::vector<int> Model::predict(const DialogueSample& dialogue) const {
  Tape tape;
  Binding bind(tape, params_);
  Forward f = forward(tape, bind, dialogue);
  return argmax_rows(f.logits.val());
}

Var task_loss(Var logits, const std::vector<int>& labels, const std::vector<double>* class_weights) {
  Tape& tape = *logits.tape;
  const Tensor& lv = logits.val();
  const int l = lv.rows(), c = lv.cols();
  if (static_cast<int>(labels.size()) != l)
    throw Error("task_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(l) + " rows");
  Tensor onehot({l, c});
  Tensor coef({l, 1});
  double weight_sum = 0.0;
  for (int t = 0; t < l; ++t) {
    const int y = labels[static_cast<std::size_t>(t)];
    if (y < 0 || y >= c)
      throw Error("task_loss: label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    onehot.at(t, y) = 1.0;
    const double w = class_weights ? (*class_weights)[static_cast<std::size_t>(y)] : 1.0;
    coef.at(t, 0) = w;
    weight_sum += w;
  }
  for (int t = 0; t < l; ++t) coef.at(t, 0) /= weight_sum;

  Var probs = softmax(logits, 1);
  Var picked = reduce_sum(probs * tape.constant(onehot), 1);  // L x 1
  Var weighted = neg(log(picked)) * tape.constant(coef);
  return reduce_sum(weighted, 0);
}

TotalLoss total_loss(Var task, Var lb, double lambda) {
  TotalLoss out;
  out.parts.task = task.val().values[0];
  out.parts.lambda = lambda;
  if (lb.valid()) {
    out.parts.lb = lb.val().values[0];
    out.total = task + scale(lb, lambda);
  } else {
    out.parts.lb = 0.0;
    out.total = task;
  }
  out.parts.total = out.total.val().values[0];
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(logits.rows()));
  for (int i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out.push_back(best);
  }
  return out;
}

}  // namespace hfl

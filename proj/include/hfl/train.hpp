// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training harness: adaptive-moment optimizer, plateau learning-rate
// schedule, run configuration, checkpoints, training/evaluation loops and
// routing diagnostics.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hfl/model.hpp"
#include "hfl/synth.hpp"

namespace hfl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected adaptive-moment update. A non-finite gradient
// aborts the step before any state is touched.
class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig cfg);

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t step_count() const { return t_; }

  // grads(id) returns the gradient span for a parameter; an empty span means
  // zero gradient (the parameter did not participate this step).
  void step(ParamStore& params, const std::function<std::span<const double>(ParamId)>& grads);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct PlateauConfig {
  int patience = 5;
  double factor = 0.5;
  double min_lr = 1e-5;
  double improve_eps = 1e-4;
};

// Halves the learning rate after `patience` evaluations without an
// improvement greater than improve_eps; never increases, floors at min_lr.
class PlateauSchedule {
 public:
  PlateauSchedule(double initial_lr, PlateauConfig cfg) : lr_(initial_lr), cfg_(cfg) {}

  double observe(double dev_metric);
  double lr() const { return lr_; }

 private:
  double lr_;
  PlateauConfig cfg_;
  double best_ = -1e300;
  int stale_ = 0;
};

struct RunConfig {
  ModelConfig model;
  std::string data_path;
  int epochs = 40;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  int dialogues_per_step = 1;
  double split_train = 0.7, split_dev = 0.15, split_test = 0.15;
  std::uint64_t split_seed = 42;
  PlateauConfig plateau;
  bool class_weights = false;     // inverse-frequency weights from the train split
  bool non_finite_guard = false;  // per-op non-finite detection on the tape
  std::string out_dir = "run_out";

  void validate() const;
};

// Flat key-value JSON <-> RunConfig. Unknown keys are rejected.
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

SynthSpec synth_spec_from_json_text(const std::string& text);
SynthSpec load_synth_spec(const std::string& path);

inline constexpr const char* kCheckpointFormat = "hfl-ckpt-1";

struct Checkpoint {
  int epoch = 0;
  double dev_accuracy = 0.0;
  double dev_weighted_f1 = 0.0;
  RunConfig config;
  std::vector<std::pair<std::string, Tensor>> entries;  // canonical parameter order
};

Checkpoint snapshot(const Model& model, const RunConfig& cfg, int epoch, double dev_acc, double dev_wf1);
// Header line (JSON manifest) + little-endian 64-bit payload.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// Copies entries into a model; names and shapes must match exactly.
void load_into_model(const Checkpoint& ckpt, Model& model);

struct TrainResult {
  std::string checkpoint_path;       // best-dev checkpoint
  std::string log_path;              // per-epoch JSON lines
  std::vector<std::string> log_lines;
  Checkpoint best;
  MetricsReport best_dev;
};

// Epoch loop with seeded shuffling, per-step adaptive updates, per-epoch dev
// evaluation and plateau scheduling; keeps the best-dev checkpoint.
TrainResult train(const RunConfig& cfg, const Corpus& corpus);
TrainResult train(const RunConfig& cfg);  // reads cfg.data_path

MetricsReport evaluate_samples(const Model& model, std::span<const DialogueSample> samples);
// Re-derives the split from the checkpoint's config echo.
MetricsReport evaluate(const Checkpoint& ckpt, const Corpus& corpus, const std::string& split_name);

struct PairRouteStats {
  std::string pair;
  std::vector<double> usage;
  std::vector<std::int64_t> kept_count;
  std::int64_t routed = 0;
};

struct GateStats {
  std::string modality;
  double mean = 0.0, min = 1.0, max = 0.0;
};

struct RouteStats {
  std::vector<PairRouteStats> pairs;   // full mode only
  std::vector<GateStats> gates;        // hgf/full modes
};

RouteStats route_stats(const Model& model, std::span<const DialogueSample> samples);

struct LadderRow {
  AblationMode mode;
  double test_accuracy = 0.0;
  double test_weighted_f1 = 0.0;
};

// Trains all three ablation modes on the same corpus and seed; rows come
// back in baseline, hgf, hgf+moa order.
std::vector<LadderRow> ablation_ladder(const RunConfig& cfg, const Corpus& corpus);

}  // namespace hfl

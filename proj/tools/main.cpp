// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// hfl command line: data generation, training, evaluation, gradient checks
// and routing/graph diagnostics.
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hfl/checks.hpp"
#include "hfl/train.hpp"
#include "json.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json metrics_to_json(const hfl::MetricsReport& r) {
  ordered_json j;
  j["accuracy"] = r.accuracy;
  j["w_f1"] = r.weighted_f1;
  j["per_class_f1"] = r.per_class_f1;
  j["freq"] = r.freq;
  j["confusion"] = r.confusion;
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"hotspot-gated fusion / mixture-of-aligners conversation classifier"};
  app.require_subcommand(1);

  // gen-data
  std::string spec_path, out_path;
  bool gen_stats = false;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--spec", spec_path, "generator spec JSON")->required();
  gen->add_option("--out", out_path, "output corpus path")->required();
  gen->add_flag("--stats", gen_stats, "also report closed-form reference-rule accuracies");

  // train
  std::string config_path, ablation_override;
  std::int64_t seed_override = -1;
  auto* tr = app.add_subcommand("train", "train a model from a run config");
  tr->add_option("--config", config_path, "run config JSON")->required();
  tr->add_option("--ablation", ablation_override, "baseline | hgf | hgf+moa");
  tr->add_option("--seed", seed_override, "override the config seed");

  // eval
  std::string ckpt_path, data_path, split_name = "test";
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
  ev->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  ev->add_option("--data", data_path, "corpus path")->required();
  ev->add_option("--split", split_name, "train | dev | test (default test)");

  // gradcheck
  std::string module = "all";
  int seeds = 20;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks of the composed forwards");
  gc->add_option("--module", module, "all | primitives | hgf | moa | graph | model");
  gc->add_option("--seeds", seeds, "seeded instances per suite (default 20)");

  // route-stats
  std::string rs_ckpt, rs_data;
  auto* rs = app.add_subcommand("route-stats", "expert usage and gate statistics of a checkpoint");
  rs->add_option("--ckpt", rs_ckpt, "checkpoint path")->required();
  rs->add_option("--data", rs_data, "corpus path")->required();

  // ablation-ladder
  std::string ladder_config;
  auto* lad = app.add_subcommand("ablation-ladder", "train baseline, hgf and hgf+moa on the same corpus/seed");
  lad->add_option("--config", ladder_config, "run config JSON")->required();

  // graph-dump
  int gd_length = 4, gd_past = 4, gd_future = 4;
  bool gd_no_cross = false;
  auto* gd = app.add_subcommand("graph-dump", "print the typed conversation graph for a dialogue length");
  gd->add_option("--length", gd_length, "utterance count (default 4)");
  gd->add_option("--window-past", gd_past, "past window (default 4)");
  gd->add_option("--window-future", gd_future, "future window (default 4)");
  gd->add_flag("--no-cross-modal", gd_no_cross, "drop same-time cross-modal links");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    const hfl::SynthSpec spec = hfl::load_synth_spec(spec_path);
    const auto samples = hfl::generate(spec);
    hfl::write_corpus(spec, samples, out_path);
    ordered_json j;
    j["dialogues"] = samples.size();
    std::int64_t utts = 0;
    for (const auto& d : samples) utts += d.length();
    j["utterances"] = utts;
    j["path"] = out_path;
    if (gen_stats) {
      j["content_rule_accuracy"] = hfl::content_rule_accuracy(spec, samples);
      j["hotspot_rule_accuracy"] = hfl::hotspot_rule_accuracy(spec, samples);
    }
    std::cout << j.dump() << "\n";
    return 0;
  }

  if (tr->parsed()) {
    hfl::RunConfig cfg = hfl::load_run_config(config_path);
    if (!ablation_override.empty()) cfg.model.ablation = hfl::parse_ablation(ablation_override);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    const hfl::TrainResult r = hfl::train(cfg);
    ordered_json j;
    j["checkpoint"] = r.checkpoint_path;
    j["log"] = r.log_path;
    j["best_epoch"] = r.best.epoch;
    j["best_dev_accuracy"] = r.best.dev_accuracy;
    j["best_dev_w_f1"] = r.best.dev_weighted_f1;
    std::cout << j.dump() << "\n";
    return 0;
  }

  if (ev->parsed()) {
    const hfl::Checkpoint ckpt = hfl::load_checkpoint(ckpt_path);
    const hfl::Corpus corpus = hfl::read_corpus(data_path);
    const hfl::MetricsReport r = hfl::evaluate(ckpt, corpus, split_name);
    std::cout << metrics_to_json(r).dump() << "\n";
    return 0;
  }

  if (gc->parsed()) {
    const auto results = hfl::gradcheck_suite(module, seeds);
    bool all_pass = true;
    for (const auto& r : results) {
      ordered_json j;
      j["suite"] = r.name;
      j["pass"] = r.pass;
      j["max_rel_err"] = r.max_err;
      j["tol"] = r.tol;
      j["coords_checked"] = r.checks;
      std::cout << j.dump() << "\n";
      all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
  }

  if (rs->parsed()) {
    const hfl::Checkpoint ckpt = hfl::load_checkpoint(rs_ckpt);
    const hfl::Corpus corpus = hfl::read_corpus(rs_data);
    hfl::Model model(ckpt.config.model, ckpt.config.seed);
    hfl::load_into_model(ckpt, model);
    const hfl::RouteStats stats = hfl::route_stats(model, corpus.samples);
    ordered_json j;
    ordered_json pairs;
    for (const auto& p : stats.pairs) {
      ordered_json pj;
      pj["usage"] = p.usage;
      pj["kept_count"] = p.kept_count;
      pj["routed"] = p.routed;
      pairs[p.pair] = pj;
    }
    j["pairs"] = pairs;
    ordered_json gates;
    for (const auto& g : stats.gates)
      gates[g.modality] = ordered_json{{"mean", g.mean}, {"min", g.min}, {"max", g.max}};
    j["gates"] = gates;
    std::cout << j.dump() << "\n";
    return 0;
  }

  if (lad->parsed()) {
    const hfl::RunConfig cfg = hfl::load_run_config(ladder_config);
    const hfl::Corpus corpus = hfl::read_corpus(cfg.data_path);
    const auto rows = hfl::ablation_ladder(cfg, corpus);
    std::printf("%-10s %10s %10s\n", "mode", "acc", "w-F1");
    for (const auto& row : rows)
      std::printf("%-10s %10.4f %10.4f\n", hfl::ablation_name(row.mode), row.test_accuracy, row.test_weighted_f1);
    return 0;
  }

  if (gd->parsed()) {
    hfl::GraphConfig cfg;
    cfg.window_past = gd_past;
    cfg.window_future = gd_future;
    cfg.cross_modal = !gd_no_cross;
    const hfl::TypedEdgeList g = hfl::build_graph(gd_length, cfg);
    ordered_json j;
    j["length"] = g.length;
    j["modalities"] = g.modalities;
    ordered_json rels = ordered_json::array();
    for (const auto& r : g.relations) rels.push_back(hfl::relation_name(r));
    j["relations"] = rels;
    ordered_json edges = ordered_json::array();
    for (const auto& e : g.edges) edges.push_back(ordered_json::array({e.src, e.dst, e.relation}));
    j["edges"] = edges;
    std::cout << j.dump() << "\n";
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

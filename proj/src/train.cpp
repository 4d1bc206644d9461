// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace hfl {

namespace {
using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;
}  // namespace

Adam::Adam(const ParamStore& params, AdamConfig cfg) : cfg_(cfg) {
  m_.resize(static_cast<std::size_t>(params.count()));
  v_.resize(static_cast<std::size_t>(params.count()));
  for (int i = 0; i < params.count(); ++i) {
    const auto n = static_cast<std::size_t>(params.tensor(i).numel());
    m_[static_cast<std::size_t>(i)].assign(n, 0.0);
    v_[static_cast<std::size_t>(i)].assign(n, 0.0);
  }
}

void Adam::step(ParamStore& params, const std::function<std::span<const double>(ParamId)>& grads) {
  // Validate every gradient before touching any state so an aborted step
  // leaves parameters and moments untouched.
  for (int i = 0; i < params.count(); ++i) {
    const auto g = grads(i);
    if (g.empty()) continue;
    if (g.size() != static_cast<std::size_t>(params.tensor(i).numel()))
      throw ShapeError("adam: gradient size mismatch for " + params.name(i));
    for (double x : g)
      if (!std::isfinite(x)) throw NonFiniteError("adam: non-finite gradient for " + params.name(i));
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (int i = 0; i < params.count(); ++i) {
    auto& m = m_[static_cast<std::size_t>(i)];
    auto& v = v_[static_cast<std::size_t>(i)];
    auto& theta = params.tensor(i).values;
    const auto g = grads(i);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double PlateauSchedule::observe(double dev_metric) {
  if (dev_metric > best_ + cfg_.improve_eps) {
    best_ = dev_metric;
    stale_ = 0;
  } else {
    ++stale_;
    if (stale_ >= cfg_.patience) {
      lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
      stale_ = 0;
    }
  }
  return lr_;
}

void RunConfig::validate() const {
  model.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (lr <= 0) throw ConfigError("lr must be > 0");
  if (dialogues_per_step < 1) throw ConfigError("dialogues_per_step must be >= 1");
  const double sum = split_train + split_dev + split_test;
  if (split_train < 0 || split_dev < 0 || split_test < 0 || std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  if (plateau.patience < 1) throw ConfigError("patience must be >= 1");
  if (plateau.factor <= 0 || plateau.factor > 1) throw ConfigError("lr factor must be in (0, 1]");
  if (out_dir.empty()) throw ConfigError("out_dir must be set");
}

namespace {

const char* const kKnownKeys[] = {
    "data",         "epochs",      "lr",           "seed",           "ablation",
    "out_dir",      "hidden",      "heads",        "ffn_inner",      "experts",
    "topk",         "lb_weight",   "classes",      "dim_t",          "dim_a",
    "dim_v",        "window_past", "window_future", "cross_modal_edges", "gnn_layers",
    "dialogues_per_step", "split_train", "split_dev", "split_test",  "split_seed",
    "patience",     "lr_factor",   "min_lr",       "improve_eps",    "class_weights",
    "non_finite_guard"};

}  // namespace

RunConfig run_config_from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("run config: malformed JSON");
  if (!j.is_object()) throw ConfigError("run config: expected a flat JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKnownKeys), std::end(kKnownKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKnownKeys))
      throw ConfigError("run config: unknown key '" + key + "'");
  }
  RunConfig c;
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j[key].template get<std::decay_t<decltype(slot)>>();
  };
  get("data", c.data_path);
  get("epochs", c.epochs);
  get("lr", c.lr);
  get("seed", c.seed);
  if (j.contains("ablation")) c.model.ablation = parse_ablation(j["ablation"].get<std::string>());
  get("out_dir", c.out_dir);
  get("hidden", c.model.hidden);
  get("heads", c.model.heads);
  get("ffn_inner", c.model.ffn_inner);
  get("experts", c.model.experts);
  get("topk", c.model.topk);
  get("lb_weight", c.model.lb_weight);
  get("classes", c.model.classes);
  get("dim_t", c.model.dim_t);
  get("dim_a", c.model.dim_a);
  get("dim_v", c.model.dim_v);
  get("window_past", c.model.graph.window_past);
  get("window_future", c.model.graph.window_future);
  get("cross_modal_edges", c.model.graph.cross_modal);
  get("gnn_layers", c.model.graph.layers);
  get("dialogues_per_step", c.dialogues_per_step);
  get("split_train", c.split_train);
  get("split_dev", c.split_dev);
  get("split_test", c.split_test);
  get("split_seed", c.split_seed);
  get("patience", c.plateau.patience);
  get("lr_factor", c.plateau.factor);
  get("min_lr", c.plateau.min_lr);
  get("improve_eps", c.plateau.improve_eps);
  get("class_weights", c.class_weights);
  get("non_finite_guard", c.non_finite_guard);
  c.validate();
  return c;
}

namespace {
ordered_json run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["data"] = c.data_path;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["seed"] = c.seed;
  j["ablation"] = ablation_name(c.model.ablation);
  j["out_dir"] = c.out_dir;
  j["hidden"] = c.model.hidden;
  j["heads"] = c.model.heads;
  j["ffn_inner"] = c.model.ffn_inner;
  j["experts"] = c.model.experts;
  j["topk"] = c.model.topk;
  j["lb_weight"] = c.model.lb_weight;
  j["classes"] = c.model.classes;
  j["dim_t"] = c.model.dim_t;
  j["dim_a"] = c.model.dim_a;
  j["dim_v"] = c.model.dim_v;
  j["window_past"] = c.model.graph.window_past;
  j["window_future"] = c.model.graph.window_future;
  j["cross_modal_edges"] = c.model.graph.cross_modal;
  j["gnn_layers"] = c.model.graph.layers;
  j["dialogues_per_step"] = c.dialogues_per_step;
  j["split_train"] = c.split_train;
  j["split_dev"] = c.split_dev;
  j["split_test"] = c.split_test;
  j["split_seed"] = c.split_seed;
  j["patience"] = c.plateau.patience;
  j["lr_factor"] = c.plateau.factor;
  j["min_lr"] = c.plateau.min_lr;
  j["improve_eps"] = c.plateau.improve_eps;
  j["class_weights"] = c.class_weights;
  j["non_finite_guard"] = c.non_finite_guard;
  return j;
}
}  // namespace

std::string run_config_to_json_text(const RunConfig& cfg) { return run_config_to_json(cfg).dump(); }

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return run_config_from_json_text(text);
}

SynthSpec synth_spec_from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("synth spec: malformed JSON");
  SynthSpec s;
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j[key].template get<std::decay_t<decltype(slot)>>();
  };
  get("classes", s.classes);
  get("dialogues", s.dialogues);
  get("len_min", s.len_min);
  get("len_max", s.len_max);
  get("dim_t", s.dim_t);
  get("dim_a", s.dim_a);
  get("dim_v", s.dim_v);
  get("hotspot_gain", s.hotspot_gain);
  get("content_gain", s.content_gain);
  get("noise", s.noise);
  get("lag", s.lag);
  get("corrupt_prob", s.corrupt_prob);
  get("seed", s.seed);
  s.validate();
  return s;
}

SynthSpec load_synth_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open spec '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return synth_spec_from_json_text(text);
}

Checkpoint snapshot(const Model& model, const RunConfig& cfg, int epoch, double dev_acc, double dev_wf1) {
  Checkpoint c;
  c.epoch = epoch;
  c.dev_accuracy = dev_acc;
  c.dev_weighted_f1 = dev_wf1;
  c.config = cfg;
  const ParamStore& ps = model.params();
  for (int i = 0; i < ps.count(); ++i) {
    Tensor t = ps.tensor(i);
    t.grad.reset();
    c.entries.emplace_back(ps.name(i), std::move(t));
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ordered_json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["epoch"] = ckpt.epoch;
  manifest["dev"] = ordered_json{{"accuracy", ckpt.dev_accuracy}, {"w_f1", ckpt.dev_weighted_f1}};
  manifest["config"] = run_config_to_json(ckpt.config);
  ordered_json params = ordered_json::array();
  std::int64_t payload = 0;
  for (const auto& [name, t] : ckpt.entries) {
    ordered_json shape = ordered_json::array();
    for (int d = 0; d < t.shape.rank(); ++d) shape.push_back(t.shape.extent(d));
    params.push_back(ordered_json{{"name", name}, {"shape", shape}});
    payload += t.numel();
  }
  manifest["params"] = params;
  manifest["payload_reals"] = payload;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out << manifest.dump() << '\n';
  // Payload: concatenated 64-bit reals, little-endian (native on every
  // supported target; asserted at build time below).
  static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian");
  for (const auto& [_, t] : ckpt.entries)
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  if (!out) throw CheckpointError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw CheckpointError("checkpoint missing manifest line");
  json manifest = json::parse(header, nullptr, false);
  if (manifest.is_discarded()) throw CheckpointError("checkpoint manifest is not valid JSON");
  if (!manifest.contains("format") || manifest["format"].get<std::string>() != kCheckpointFormat)
    throw CheckpointError("unsupported checkpoint format (want \"" + std::string(kCheckpointFormat) + "\")");
  Checkpoint c;
  try {
    c.epoch = manifest.at("epoch").get<int>();
    c.dev_accuracy = manifest.at("dev").at("accuracy").get<double>();
    c.dev_weighted_f1 = manifest.at("dev").at("w_f1").get<double>();
    c.config = run_config_from_json_text(manifest.at("config").dump());
    for (const auto& p : manifest.at("params")) {
      Shape shape;
      for (const auto& e : p.at("shape")) shape.push_back(e.get<int>());
      Tensor t(shape);
      in.read(reinterpret_cast<char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
      if (in.gcount() != static_cast<std::streamsize>(t.values.size() * sizeof(double)))
        throw CheckpointError("checkpoint payload truncated at '" + p.at("name").get<std::string>() + "'");
      c.entries.emplace_back(p.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw CheckpointError("bad checkpoint manifest: " + std::string(e.what()));
  }
  // Reject trailing bytes so payload length is exactly sum(shape) * 8.
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0) throw CheckpointError("checkpoint has trailing bytes");
  return c;
}

void load_into_model(const Checkpoint& ckpt, Model& model) {
  ParamStore& ps = model.params();
  if (ps.count() != static_cast<int>(ckpt.entries.size()))
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.entries.size()) + " tensors, model expects " +
                          std::to_string(ps.count()));
  for (int i = 0; i < ps.count(); ++i) {
    const auto& [name, t] = ckpt.entries[static_cast<std::size_t>(i)];
    if (name != ps.name(i))
      throw CheckpointError("checkpoint entry '" + name + "' does not match model parameter '" + ps.name(i) + "'");
    if (t.shape != ps.tensor(i).shape)
      throw CheckpointError("shape mismatch for '" + name + "': checkpoint " + t.shape.str() + ", model " +
                            ps.tensor(i).shape.str());
    ps.tensor(i).values = t.values;
  }
}

MetricsReport evaluate_samples(const Model& model, std::span<const DialogueSample> samples) {
  if (samples.empty()) throw Error("evaluate: empty split");
  std::vector<int> pred, truth;
  for (const DialogueSample& d : samples) {
    const auto p = model.predict(d);
    pred.insert(pred.end(), p.begin(), p.end());
    truth.insert(truth.end(), d.labels.begin(), d.labels.end());
  }
  return metrics(pred, truth, model.config().classes);
}

namespace {

void check_corpus_compatible(const RunConfig& cfg, const Corpus& corpus) {
  if (corpus.spec.classes != cfg.model.classes)
    throw ConfigError("corpus has " + std::to_string(corpus.spec.classes) + " classes, config expects " +
                      std::to_string(cfg.model.classes));
  if (corpus.spec.dim_t != cfg.model.dim_t || corpus.spec.dim_a != cfg.model.dim_a ||
      corpus.spec.dim_v != cfg.model.dim_v)
    throw ConfigError("corpus dims disagree with model config");
}

std::vector<double> inverse_frequency_weights(std::span<const DialogueSample> samples, int classes) {
  std::vector<std::int64_t> count(static_cast<std::size_t>(classes), 0);
  std::int64_t total = 0;
  for (const auto& d : samples)
    for (int y : d.labels) {
      ++count[static_cast<std::size_t>(y)];
      ++total;
    }
  std::vector<double> w(static_cast<std::size_t>(classes), 0.0);
  for (int k = 0; k < classes; ++k)
    if (count[static_cast<std::size_t>(k)] > 0)
      w[static_cast<std::size_t>(k)] =
          static_cast<double>(total) / (static_cast<double>(classes) * static_cast<double>(count[static_cast<std::size_t>(k)]));
  return w;
}

ordered_json usage_to_json(const std::vector<PairRouteStats>& pairs) {
  ordered_json u;
  for (const auto& p : pairs) {
    ordered_json v = ordered_json::array();
    for (double x : p.usage) v.push_back(x);
    u[p.pair] = v;
  }
  return u;
}

}  // namespace

RouteStats route_stats(const Model& model, std::span<const DialogueSample> samples) {
  RouteStats out;
  const ModelConfig& mc = model.config();
  std::vector<UsageAccumulator> acc;
  if (mc.uses_moa()) acc.assign(kPairCount, UsageAccumulator(mc.experts));
  std::array<double, kModalityCount> alpha_sum{};
  std::array<std::int64_t, kModalityCount> alpha_n{};
  std::array<double, kModalityCount> alpha_min{1.0, 1.0, 1.0};
  std::array<double, kModalityCount> alpha_max{0.0, 0.0, 0.0};
  for (const DialogueSample& d : samples) {
    Tape tape;
    Binding bind(tape, model.params());
    Model::Forward f = model.forward(tape, bind, d);
    for (std::size_t p = 0; p < f.usage.size(); ++p) acc[p].merge(f.usage[p]);
    if (mc.uses_gates()) {
      for (int m = 0; m < kModalityCount; ++m) {
        const Tensor& a = f.gate_alpha[static_cast<std::size_t>(m)];
        for (double x : a.values) {
          alpha_sum[static_cast<std::size_t>(m)] += x;
          ++alpha_n[static_cast<std::size_t>(m)];
          alpha_min[static_cast<std::size_t>(m)] = std::min(alpha_min[static_cast<std::size_t>(m)], x);
          alpha_max[static_cast<std::size_t>(m)] = std::max(alpha_max[static_cast<std::size_t>(m)], x);
        }
      }
    }
  }
  if (mc.uses_moa())
    for (int p = 0; p < kPairCount; ++p)
      out.pairs.push_back(PairRouteStats{pair_name(kOrderedPairs[static_cast<std::size_t>(p)]),
                                         acc[static_cast<std::size_t>(p)].usage(),
                                         acc[static_cast<std::size_t>(p)].kept_count,
                                         acc[static_cast<std::size_t>(p)].routed});
  if (mc.uses_gates())
    for (int m = 0; m < kModalityCount; ++m)
      out.gates.push_back(GateStats{modality_name(static_cast<Modality>(m)),
                                    alpha_n[static_cast<std::size_t>(m)]
                                        ? alpha_sum[static_cast<std::size_t>(m)] /
                                              static_cast<double>(alpha_n[static_cast<std::size_t>(m)])
                                        : 0.0,
                                    alpha_min[static_cast<std::size_t>(m)], alpha_max[static_cast<std::size_t>(m)]});
  return out;
}

TrainResult train(const RunConfig& cfg, const Corpus& corpus) {
  cfg.validate();
  check_corpus_compatible(cfg, corpus);
  SplitResult splits = split(corpus.samples, {cfg.split_train, cfg.split_dev, cfg.split_test}, cfg.split_seed);
  if (cfg.epochs > 0 && splits.train.empty()) throw ConfigError("train split is empty");
  if (splits.dev.empty()) throw ConfigError("dev split is empty");

  std::optional<std::vector<double>> class_weights;
  if (cfg.class_weights) class_weights = inverse_frequency_weights(splits.train, cfg.model.classes);

  Model model(cfg.model, cfg.seed);
  Adam adam(model.params(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  PlateauSchedule schedule(cfg.lr, cfg.plateau);
  Rng order_rng = Rng(cfg.seed).derive(777);

  std::filesystem::create_directories(cfg.out_dir);
  const std::string log_path = cfg.out_dir + "/metrics.jsonl";
  const std::string ckpt_path = cfg.out_dir + "/best.ckpt";

  TrainResult result;
  result.log_path = log_path;
  result.checkpoint_path = ckpt_path;

  auto eval_dev = [&]() { return evaluate_samples(model, splits.dev); };

  MetricsReport dev = eval_dev();
  result.best = snapshot(model, cfg, 0, dev.accuracy, dev.weighted_f1);
  result.best_dev = dev;
  double best_acc = dev.accuracy;
  {
    ordered_json line;
    line["epoch"] = 0;
    line["dev_accuracy"] = dev.accuracy;
    line["dev_w_f1"] = dev.weighted_f1;
    line["lr"] = adam.lr();
    result.log_lines.push_back(line.dump());
  }

  std::vector<std::size_t> order(splits.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double task_sum = 0.0, lb_sum = 0.0, total_sum = 0.0;
    std::int64_t utt_count = 0, lb_groups = 0;
    std::vector<UsageAccumulator> usage(static_cast<std::size_t>(kPairCount),
                                        UsageAccumulator(cfg.model.experts));
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.dialogues_per_step)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.dialogues_per_step));
      Tape tape(cfg.non_finite_guard);
      Binding bind(tape, model.params());
      // Utterance-weighted combination so the group loss is the mean over
      // all utterances in the group.
      std::int64_t group_utts = 0;
      for (std::size_t i = begin; i < end; ++i)
        group_utts += splits.train[order[i]].length();
      Var group_total;
      double group_task = 0.0, group_lb = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const DialogueSample& d = splits.train[order[i]];
        Model::Forward f = model.forward(tape, bind, d);
        Var task = task_loss(f.logits, d.labels, class_weights ? &*class_weights : nullptr);
        TotalLoss tl = total_loss(task, f.lb, cfg.model.lb_weight);
        const double w = static_cast<double>(d.length()) / static_cast<double>(group_utts);
        Var contrib = scale(tl.total, w);
        group_total = group_total.valid() ? group_total + contrib : contrib;
        group_task += tl.parts.task * w;
        group_lb += tl.parts.lb * w;
        for (std::size_t p = 0; p < f.usage.size(); ++p) usage[p].merge(f.usage[p]);
      }
      const double total_value = group_total.val().values[0];
      if (!std::isfinite(total_value))
        throw NonFiniteError("train: non-finite loss in epoch " + std::to_string(epoch));
      tape.backward(group_total);
      adam.step(model.params(), [&](ParamId id) { return bind.grad(id); });
      task_sum += group_task * static_cast<double>(group_utts);
      lb_sum += group_lb * static_cast<double>(group_utts);
      total_sum += total_value * static_cast<double>(group_utts);
      utt_count += group_utts;
      ++lb_groups;
    }
    dev = eval_dev();
    const double new_lr = schedule.observe(dev.accuracy);
    adam.set_lr(new_lr);
    if (dev.accuracy > best_acc) {
      best_acc = dev.accuracy;
      result.best = snapshot(model, cfg, epoch, dev.accuracy, dev.weighted_f1);
      result.best_dev = dev;
    }
    ordered_json line;
    line["epoch"] = epoch;
    line["total_loss"] = total_sum / static_cast<double>(utt_count);
    line["task_loss"] = task_sum / static_cast<double>(utt_count);
    line["lb_loss"] = lb_sum / static_cast<double>(utt_count);
    line["dev_accuracy"] = dev.accuracy;
    line["dev_w_f1"] = dev.weighted_f1;
    line["lr"] = new_lr;
    if (cfg.model.uses_moa()) {
      std::vector<PairRouteStats> pairs;
      for (int p = 0; p < kPairCount; ++p)
        pairs.push_back(PairRouteStats{pair_name(kOrderedPairs[static_cast<std::size_t>(p)]),
                                       usage[static_cast<std::size_t>(p)].usage(), {}, 0});
      line["usage"] = usage_to_json(pairs);
    }
    result.log_lines.push_back(line.dump());
  }

  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw Error("cannot open '" + log_path + "' for writing");
  for (const auto& l : result.log_lines) log << l << '\n';
  log.close();
  save_checkpoint(result.best, ckpt_path);
  return result;
}

TrainResult train(const RunConfig& cfg) {
  if (cfg.data_path.empty()) throw ConfigError("run config has no data path");
  const Corpus corpus = read_corpus(cfg.data_path);
  return train(cfg, corpus);
}

MetricsReport evaluate(const Checkpoint& ckpt, const Corpus& corpus, const std::string& split_name) {
  check_corpus_compatible(ckpt.config, corpus);
  Model model(ckpt.config.model, ckpt.config.seed);
  load_into_model(ckpt, model);
  SplitResult splits = split(corpus.samples, {ckpt.config.split_train, ckpt.config.split_dev, ckpt.config.split_test},
                             ckpt.config.split_seed);
  const std::vector<DialogueSample>* chosen = nullptr;
  if (split_name == "train")
    chosen = &splits.train;
  else if (split_name == "dev")
    chosen = &splits.dev;
  else if (split_name == "test")
    chosen = &splits.test;
  else
    throw ConfigError("unknown split '" + split_name + "' (train | dev | test)");
  if (chosen->empty()) throw Error("evaluate: split '" + split_name + "' is empty");
  return evaluate_samples(model, *chosen);
}

std::vector<LadderRow> ablation_ladder(const RunConfig& cfg, const Corpus& corpus) {
  std::vector<LadderRow> rows;
  for (AblationMode mode : {AblationMode::Baseline, AblationMode::Hgf, AblationMode::Full}) {
    RunConfig mode_cfg = cfg;
    mode_cfg.model.ablation = mode;
    mode_cfg.out_dir = cfg.out_dir + "/" + ablation_name(mode);
    TrainResult r = train(mode_cfg, corpus);
    MetricsReport test = evaluate(r.best, corpus, "test");
    rows.push_back(LadderRow{mode, test.accuracy, test.weighted_f1});
  }
  return rows;
}

}  // namespace hfl

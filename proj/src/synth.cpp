// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "hfl/rng.hpp"
#include "json.hpp"

namespace hfl {

namespace {
using json = nlohmann::json;

// Seed streams inside one corpus.
enum : std::uint64_t { kStreamProto = 1000, kStreamLengths = 1, kStreamLabels = 2, kStreamDialogue = 10000 };

void emit_real(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void emit_matrix(std::string& out, const Tensor& t) {
  out += '[';
  for (int i = 0; i < t.rows(); ++i) {
    if (i) out += ',';
    out += '[';
    for (int j = 0; j < t.cols(); ++j) {
      if (j) out += ',';
      emit_real(out, t.at(i, j));
    }
    out += ']';
  }
  out += ']';
}

Tensor parse_matrix(const json& j, int rows, int cols, int line_no, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw SchemaError("line " + std::to_string(line_no) + ": " + what + " must have " + std::to_string(rows) +
                      " rows");
  Tensor t({rows, cols});
  for (int i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw SchemaError("line " + std::to_string(line_no) + ": " + what + " row " + std::to_string(i) +
                        " must have " + std::to_string(cols) + " entries");
    for (int c = 0; c < cols; ++c) t.at(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return t;
}

}  // namespace

void SynthSpec::validate() const {
  if (classes < 2) throw SpecError("classes must be >= 2");
  if (dialogues < 1) throw SpecError("dialogues must be >= 1");
  if (len_min < 1 || len_max < len_min) throw SpecError("bad utterance-length range");
  if (dim_t < 1 || dim_a < 1 || dim_v < 1) throw SpecError("dims must be positive");
  if (classes > std::min({dim_t, dim_a, dim_v}))
    throw SpecError("classes (" + std::to_string(classes) + ") exceed a modality dim; prototypes cannot be orthogonal");
  if (hotspot_gain <= 0) throw SpecError("hotspot_gain must be > 0");
  if (content_gain < 0) throw SpecError("content_gain must be >= 0");
  if (content_gain >= hotspot_gain) throw SpecError("content_gain must stay below hotspot_gain");
  if (noise <= 0) throw SpecError("noise must be > 0");
  if (lag < 0) throw SpecError("lag must be >= 0");
  if (corrupt_prob < 0 || corrupt_prob >= 1) throw SpecError("corrupt_prob must be in [0, 1)");
}

Tensor prototype_codebook(const SynthSpec& spec, Modality m) {
  spec.validate();
  const int d = spec.dim(m);
  const int c = spec.classes;
  Rng rng = Rng(spec.seed).derive(kStreamProto + static_cast<std::uint64_t>(m));
  Tensor proto({c, d});
  for (int i = 0; i < c; ++i) {
    while (true) {
      for (int j = 0; j < d; ++j) proto.at(i, j) = rng.gaussian();
      // Gram-Schmidt against earlier rows.
      for (int p = 0; p < i; ++p) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += proto.at(i, j) * proto.at(p, j);
        for (int j = 0; j < d; ++j) proto.at(i, j) -= dot * proto.at(p, j);
      }
      double norm = 0.0;
      for (int j = 0; j < d; ++j) norm += proto.at(i, j) * proto.at(i, j);
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (int j = 0; j < d; ++j) proto.at(i, j) /= norm;
        break;
      }
    }
  }
  return proto;
}

std::vector<DialogueSample> generate(const SynthSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);

  std::array<Tensor, kModalityCount> protos;
  for (Modality m : kModalities) protos[static_cast<std::size_t>(m)] = prototype_codebook(spec, m);

  Rng len_rng = root.derive(kStreamLengths);
  std::vector<int> lengths(static_cast<std::size_t>(spec.dialogues));
  std::int64_t total = 0;
  for (auto& l : lengths) {
    l = static_cast<int>(len_rng.uniform_int(spec.len_min, spec.len_max));
    total += l;
  }

  // Balanced label pool: round-robin classes, then one seeded shuffle.
  std::vector<int> pool(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) pool[static_cast<std::size_t>(i)] = static_cast<int>(i % spec.classes);
  Rng label_rng = root.derive(kStreamLabels);
  label_rng.shuffle(pool);

  std::vector<DialogueSample> out;
  out.reserve(lengths.size());
  std::int64_t cursor = 0;
  for (int i = 0; i < spec.dialogues; ++i) {
    const int l = lengths[static_cast<std::size_t>(i)];
    DialogueSample d;
    d.id = i;
    d.labels.assign(pool.begin() + cursor, pool.begin() + cursor + l);
    cursor += l;

    Rng rng = root.derive(kStreamDialogue + static_cast<std::uint64_t>(i));
    // Noise first (fixed draw order), then lag/corruption decisions.
    for (Modality m : kModalities) {
      const int dim = spec.dim(m);
      ModalPair& track = d.track(m);
      track.modality = m;
      track.content = Tensor({l, dim});
      track.hotspot = Tensor({l, dim});
      const Tensor& proto = protos[static_cast<std::size_t>(m)];
      for (int t = 0; t < l; ++t) {
        const int y = d.labels[static_cast<std::size_t>(t)];
        for (int j = 0; j < dim; ++j)
          track.content.at(t, j) = spec.content_gain * proto.at(y, j) + spec.noise * rng.gaussian();
        for (int j = 0; j < dim; ++j) track.hotspot.at(t, j) = spec.noise * rng.gaussian();
      }
    }
    for (int t = 0; t < l; ++t) {
      const int y = d.labels[static_cast<std::size_t>(t)];
      for (Modality m : kModalities) {
        const int lag = spec.lag > 0 ? static_cast<int>(rng.uniform_int(-spec.lag, spec.lag)) : 0;
        const bool corrupted = rng.uniform() < spec.corrupt_prob;
        if (corrupted) continue;
        const int row = std::clamp(t + lag, 0, l - 1);
        ModalPair& track = d.track(m);
        const Tensor& proto = protos[static_cast<std::size_t>(m)];
        for (int j = 0; j < spec.dim(m); ++j) track.hotspot.at(row, j) += spec.hotspot_gain * proto.at(y, j);
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

SynthSpec spec_from_json(const json& j) {
  SynthSpec s;
  s.classes = j.at("classes").get<int>();
  s.dialogues = j.at("dialogues").get<int>();
  s.len_min = j.at("len_min").get<int>();
  s.len_max = j.at("len_max").get<int>();
  s.dim_t = j.at("dim_t").get<int>();
  s.dim_a = j.at("dim_a").get<int>();
  s.dim_v = j.at("dim_v").get<int>();
  s.hotspot_gain = j.at("hotspot_gain").get<double>();
  s.content_gain = j.at("content_gain").get<double>();
  s.noise = j.at("noise").get<double>();
  s.lag = j.at("lag").get<int>();
  s.corrupt_prob = j.at("corrupt_prob").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void write_corpus(const SynthSpec& spec, std::span<const DialogueSample> samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  std::string line;
  // Header: format tag, dims, class count and the generator spec echo. The
  // spec echo is emitted through the same %.17g writer as the payload so a
  // regenerated corpus is byte-identical.
  line += "{\"format\":\"";
  line += kCorpusFormat;
  line += "\",\"classes\":" + std::to_string(spec.classes);
  line += ",\"dims\":{\"T\":" + std::to_string(spec.dim_t) + ",\"A\":" + std::to_string(spec.dim_a) +
          ",\"V\":" + std::to_string(spec.dim_v) + "}";
  line += ",\"spec\":{\"classes\":" + std::to_string(spec.classes);
  line += ",\"dialogues\":" + std::to_string(spec.dialogues);
  line += ",\"len_min\":" + std::to_string(spec.len_min);
  line += ",\"len_max\":" + std::to_string(spec.len_max);
  line += ",\"dim_t\":" + std::to_string(spec.dim_t);
  line += ",\"dim_a\":" + std::to_string(spec.dim_a);
  line += ",\"dim_v\":" + std::to_string(spec.dim_v);
  line += ",\"hotspot_gain\":";
  emit_real(line, spec.hotspot_gain);
  line += ",\"content_gain\":";
  emit_real(line, spec.content_gain);
  line += ",\"noise\":";
  emit_real(line, spec.noise);
  line += ",\"lag\":" + std::to_string(spec.lag);
  line += ",\"corrupt_prob\":";
  emit_real(line, spec.corrupt_prob);
  line += ",\"seed\":" + std::to_string(spec.seed);
  line += "}}\n";
  out << line;

  for (const DialogueSample& d : samples) {
    line.clear();
    line += "{\"id\":" + std::to_string(d.id) + ",\"length\":" + std::to_string(d.length());
    line += ",\"labels\":[";
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
      if (i) line += ',';
      line += std::to_string(d.labels[i]);
    }
    line += ']';
    for (Modality m : kModalities) {
      line += ",\"";
      line += modality_name(m);
      line += "\":{\"content\":";
      emit_matrix(line, d.track(m).content);
      line += ",\"hotspot\":";
      emit_matrix(line, d.track(m).hotspot);
      line += '}';
    }
    line += "}\n";
    out << line;
  }
  if (!out) throw Error("write to '" + path + "' failed");
}

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::string line;
  int line_no = 0;

  auto parse_line = [&](const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
      throw ParseError("line " + std::to_string(line_no) + ": malformed JSON");
    return j;
  };

  if (!std::getline(in, line)) throw ParseError("line 1: empty corpus file");
  line_no = 1;
  const json header = parse_line(line);
  if (!header.contains("format") || !header["format"].is_string() ||
      header["format"].get<std::string>() != kCorpusFormat)
    throw SchemaError("line 1: unsupported corpus format (want \"" + std::string(kCorpusFormat) + "\")");
  Corpus corpus;
  try {
    corpus.spec = spec_from_json(header.at("spec"));
    const json& dims = header.at("dims");
    if (dims.at("T").get<int>() != corpus.spec.dim_t || dims.at("A").get<int>() != corpus.spec.dim_a ||
        dims.at("V").get<int>() != corpus.spec.dim_v ||
        header.at("classes").get<int>() != corpus.spec.classes)
      throw SchemaError("line 1: header dims/classes disagree with spec echo");
  } catch (const json::exception& e) {
    throw SchemaError("line 1: bad header: " + std::string(e.what()));
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = parse_line(line);
    DialogueSample d;
    try {
      d.id = j.at("id").get<int>();
      const int l = j.at("length").get<int>();
      if (l < 1) throw SchemaError("line " + std::to_string(line_no) + ": non-positive length");
      const json& labels = j.at("labels");
      if (!labels.is_array() || static_cast<int>(labels.size()) != l)
        throw SchemaError("line " + std::to_string(line_no) + ": labels/length mismatch");
      for (const auto& y : labels) {
        const int yi = y.get<int>();
        if (yi < 0 || yi >= corpus.spec.classes)
          throw SchemaError("line " + std::to_string(line_no) + ": label " + std::to_string(yi) +
                            " outside [0, " + std::to_string(corpus.spec.classes) + ")");
        d.labels.push_back(yi);
      }
      for (Modality m : kModalities) {
        const json& track = j.at(modality_name(m));
        ModalPair& p = d.track(m);
        p.modality = m;
        p.content = parse_matrix(track.at("content"), l, corpus.spec.dim(m), line_no, "content");
        p.hotspot = parse_matrix(track.at("hotspot"), l, corpus.spec.dim(m), line_no, "hotspot");
      }
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    corpus.samples.push_back(std::move(d));
  }
  return corpus;
}

SplitResult split(std::span<const DialogueSample> samples, const std::array<double, 3>& fractions,
                  std::uint64_t seed) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0 || std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  const auto n = static_cast<std::int64_t>(samples.size());
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = std::llround(fractions[0] * static_cast<double>(n));
  const auto n_dev = std::llround((fractions[0] + fractions[1]) * static_cast<double>(n)) - n_train;
  SplitResult r;
  for (std::int64_t i = 0; i < n; ++i) {
    const DialogueSample& s = samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    if (i < n_train)
      r.train.push_back(s);
    else if (i < n_train + n_dev)
      r.dev.push_back(s);
    else
      r.test.push_back(s);
  }
  return r;
}

namespace {

double rule_accuracy(const SynthSpec& spec, std::span<const DialogueSample> samples, bool hotspot) {
  std::array<Tensor, kModalityCount> protos;
  for (Modality m : kModalities) protos[static_cast<std::size_t>(m)] = prototype_codebook(spec, m);
  std::int64_t correct = 0, total = 0;
  for (const DialogueSample& d : samples) {
    const int l = d.length();
    for (int t = 0; t < l; ++t) {
      int best = 0;
      double best_score = -1e300;
      for (int y = 0; y < spec.classes; ++y) {
        double score = 0.0;
        for (Modality m : kModalities) {
          const Tensor& proto = protos[static_cast<std::size_t>(m)];
          const Tensor& mat = hotspot ? d.track(m).hotspot : d.track(m).content;
          const int dim = spec.dim(m);
          if (!hotspot) {
            double dot = 0.0;
            for (int j = 0; j < dim; ++j) dot += mat.at(t, j) * proto.at(y, j);
            score += dot;
          } else {
            // Lag-corrected: best match over the lag window around t.
            double best_dot = -1e300;
            for (int delta = -spec.lag; delta <= spec.lag; ++delta) {
              const int row = t + delta;
              if (row < 0 || row >= l) continue;
              double dot = 0.0;
              for (int j = 0; j < dim; ++j) dot += mat.at(row, j) * proto.at(y, j);
              best_dot = std::max(best_dot, dot);
            }
            score += best_dot;
          }
        }
        if (score > best_score) {
          best_score = score;
          best = y;
        }
      }
      correct += (best == d.labels[static_cast<std::size_t>(t)]) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

double content_rule_accuracy(const SynthSpec& spec, std::span<const DialogueSample> samples) {
  return rule_accuracy(spec, samples, false);
}

double hotspot_rule_accuracy(const SynthSpec& spec, std::span<const DialogueSample> samples) {
  return rule_accuracy(spec, samples, true);
}

}  // namespace hfl

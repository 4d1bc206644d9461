// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "hfl/synth.hpp"

using namespace hfl;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool samples_equal(const std::vector<DialogueSample>& a, const std::vector<DialogueSample>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].labels != b[i].labels) return false;
    for (Modality m : kModalities) {
      if (a[i].track(m).content.values != b[i].track(m).content.values) return false;
      if (a[i].track(m).hotspot.values != b[i].track(m).hotspot.values) return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("spec validation") {
  SynthSpec s;
  s.classes = 20;  // exceeds dim 16
  CHECK_THROWS_AS(s.validate(), SpecError);
  SynthSpec s2;
  s2.content_gain = 5.0;  // must stay below hotspot gain
  CHECK_THROWS_AS(s2.validate(), SpecError);
  SynthSpec s3;
  s3.corrupt_prob = 1.0;
  CHECK_THROWS_AS(s3.validate(), SpecError);
}

TEST_CASE("prototypes are orthonormal") {
  SynthSpec spec;
  Tensor p = prototype_codebook(spec, Modality::A);
  for (int i = 0; i < spec.classes; ++i)
    for (int j = 0; j <= i; ++j) {
      double dot = 0;
      for (int d = 0; d < spec.dim_a; ++d) dot += p.at(i, d) * p.at(j, d);
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
    }
}

TEST_CASE("noiseless construction plants the scaled prototype and is perfectly decodable") {
  SynthSpec spec;
  spec.dialogues = 20;
  spec.lag = 0;
  spec.corrupt_prob = 0.0;
  spec.noise = 1e-9;
  spec.content_gain = 0.0;
  auto samples = generate(spec);
  const Tensor proto = prototype_codebook(spec, Modality::T);
  const DialogueSample& d = samples[0];
  for (int t = 0; t < d.length(); ++t)
    for (int j = 0; j < spec.dim_t; ++j)
      CHECK(d.track(Modality::T).hotspot.at(t, j) ==
            doctest::Approx(spec.hotspot_gain * proto.at(d.labels[static_cast<std::size_t>(t)], j)).epsilon(1e-6));
  CHECK(hotspot_rule_accuracy(spec, samples) == 1.0);
}

TEST_CASE("generation is deterministic under the seed") {
  SynthSpec spec;
  spec.dialogues = 10;
  auto a = generate(spec);
  auto b = generate(spec);
  CHECK(samples_equal(a, b));
  spec.seed = 2;
  CHECK(!samples_equal(a, generate(spec)));
}

TEST_CASE("labels are balanced within 20 percent of uniform for 200 dialogues") {
  SynthSpec spec;
  spec.dialogues = 200;
  auto samples = generate(spec);
  std::vector<std::int64_t> count(static_cast<std::size_t>(spec.classes), 0);
  std::int64_t total = 0;
  for (const auto& d : samples)
    for (int y : d.labels) {
      ++count[static_cast<std::size_t>(y)];
      ++total;
    }
  const double uniform = 1.0 / spec.classes;
  for (auto c : count) {
    const double freq = static_cast<double>(c) / static_cast<double>(total);
    CHECK(std::abs(freq - uniform) <= 0.2 * uniform);
  }
}

TEST_CASE("corpus round-trips exactly and regenerates byte-identically") {
  SynthSpec spec;
  spec.dialogues = 8;
  auto samples = generate(spec);
  const std::string path = temp_path("hfl_corpus_rt.jsonl");
  write_corpus(spec, samples, path);
  Corpus back = read_corpus(path);
  CHECK(back.spec.seed == spec.seed);
  CHECK(back.spec.classes == spec.classes);
  CHECK(samples_equal(back.samples, samples));

  const std::string path2 = temp_path("hfl_corpus_rt2.jsonl");
  write_corpus(spec, generate(spec), path2);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("header version is enforced") {
  SynthSpec spec;
  spec.dialogues = 2;
  const std::string path = temp_path("hfl_corpus_hdr.jsonl");
  write_corpus(spec, generate(spec), path);
  std::string text = slurp(path);
  const auto pos = text.find("hfl-1");
  text.replace(pos, 5, "hfl-9");
  std::ofstream(path, std::ios::binary) << text;
  CHECK_THROWS_AS(read_corpus(path), SchemaError);
}

TEST_CASE("truncated final line names its line number") {
  SynthSpec spec;
  spec.dialogues = 3;
  const std::string path = temp_path("hfl_corpus_trunc.jsonl");
  write_corpus(spec, generate(spec), path);
  std::string text = slurp(path);
  std::ofstream(path, std::ios::binary) << text.substr(0, text.size() - 40);
  try {
    read_corpus(path);
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("dimension mismatch against the header is a schema error") {
  SynthSpec spec;
  spec.dialogues = 2;
  const std::string path = temp_path("hfl_corpus_dims.jsonl");
  write_corpus(spec, generate(spec), path);
  std::string text = slurp(path);
  // Claim a different text dim in the header (both occurrences on line 1).
  const auto nl = text.find('\n');
  std::string header = text.substr(0, nl);
  std::string rest = text.substr(nl);
  for (std::string::size_type p = header.find("\"dim_t\":16"); p != std::string::npos;
       p = header.find("\"dim_t\":16", p + 1))
    header.replace(p, 10, "\"dim_t\":12");
  for (std::string::size_type p = header.find("\"T\":16"); p != std::string::npos; p = header.find("\"T\":16", p + 1))
    header.replace(p, 6, "\"T\":12");
  std::ofstream(path, std::ios::binary) << header << rest;
  CHECK_THROWS_AS(read_corpus(path), SchemaError);
}

TEST_CASE("split covers the corpus, is disjoint and seeded") {
  SynthSpec spec;
  spec.dialogues = 30;
  auto samples = generate(spec);
  SUBCASE("all-train split") {
    SplitResult r = split(samples, {1.0, 0.0, 0.0}, 5);
    CHECK(r.train.size() == 30);
    CHECK(r.dev.empty());
    CHECK(r.test.empty());
  }
  SUBCASE("seeded and disjoint") {
    SplitResult a = split(samples, {0.6, 0.2, 0.2}, 5);
    SplitResult b = split(samples, {0.6, 0.2, 0.2}, 5);
    CHECK(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
    std::set<int> ids;
    for (const auto* part : {&a.train, &a.dev, &a.test})
      for (const auto& d : *part) CHECK(ids.insert(d.id).second);
    CHECK(ids.size() == 30);
  }
  SUBCASE("fractions must sum to one") {
    CHECK_THROWS_AS(split(samples, {0.5, 0.2, 0.2}, 5), ConfigError);
  }
}

TEST_CASE("hotspot rule beats content rule by ten points on the reference corpus") {
  SynthSpec spec;  // generator defaults are the acceptance settings
  auto samples = generate(spec);
  const double content = content_rule_accuracy(spec, samples);
  const double hotspot = hotspot_rule_accuracy(spec, samples);
  CHECK(hotspot - content >= 0.10);
}

TEST_CASE("hotspot rule beats the content rule whenever hotspots carry the stronger gain") {
  SynthSpec spec;
  spec.dialogues = 120;
  spec.lag = 0;
  spec.corrupt_prob = 0.0;
  auto samples = generate(spec);
  CHECK(hotspot_rule_accuracy(spec, samples) > content_rule_accuracy(spec, samples));
}

}  // TEST_SUITE

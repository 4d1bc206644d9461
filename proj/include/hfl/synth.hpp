// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic conversation generator with controllable cross-modal hotspot
// asynchrony, plus the "hfl-1" corpus file format and dialogue-level splits.
//
// Per utterance t with class y: every modality draws a lag in [-lag, lag];
// the class prototype scaled by hotspot_gain is added to the hotspot matrix
// at row t + lag (clipped) unless corrupted with probability corrupt_prob.
// Content rows carry the prototype scaled by content_gain. Everything else
// is Gaussian noise.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hfl/data.hpp"

namespace hfl {

struct SynthSpec {
  int classes = 6;
  int dialogues = 500;
  int len_min = 6;
  int len_max = 12;
  int dim_t = 16;
  int dim_a = 16;
  int dim_v = 16;
  double hotspot_gain = 3.0;  // strong, localized evidence
  double content_gain = 0.5;  // weak, always-on evidence; must stay below hotspot_gain
  double noise = 1.0;
  int lag = 1;                 // max |utterance offset| of hotspot evidence
  double corrupt_prob = 0.3;   // chance a modality's hotspot is pure noise
  std::uint64_t seed = 1;

  int dim(Modality m) const {
    switch (m) {
      case Modality::T: return dim_t;
      case Modality::A: return dim_a;
      case Modality::V: return dim_v;
    }
    return 0;
  }
  void validate() const;
};

// First `classes` rows of a seeded orthonormalized matrix; separability is
// then controlled purely by the gains and the noise level.
Tensor prototype_codebook(const SynthSpec& spec, Modality m);

// Deterministic under spec.seed; labels are balanced within +-1 over the
// corpus by drawing from a shuffled round-robin pool.
std::vector<DialogueSample> generate(const SynthSpec& spec);

struct Corpus {
  SynthSpec spec;
  std::vector<DialogueSample> samples;
};

// JSON-lines, reals with 17 significant digits, header line first.
void write_corpus(const SynthSpec& spec, std::span<const DialogueSample> samples, const std::string& path);
Corpus read_corpus(const std::string& path);

inline constexpr const char* kCorpusFormat = "hfl-1";

struct SplitResult {
  std::vector<DialogueSample> train, dev, test;
};

// Dialogue-level disjoint split after a seeded shuffle; fractions must sum
// to 1.
SplitResult split(std::span<const DialogueSample> samples, const std::array<double, 3>& fractions,
                  std::uint64_t seed);

// Closed-form reference rules (matched filter against the prototype
// codebooks). The content rule scores utterance t from content rows alone;
// the hotspot rule scans hotspot rows over the lag window around t.
double content_rule_accuracy(const SynthSpec& spec, std::span<const DialogueSample> samples);
double hotspot_rule_accuracy(const SynthSpec& spec, std::span<const DialogueSample> samples);

}  // namespace hfl

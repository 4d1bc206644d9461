// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "hfl/fusion.hpp"

namespace hfl {

// One dialogue: per-utterance labels plus content/hotspot matrices for each
// modality (exactly one row per utterance).
struct DialogueSample {
  int id = 0;
  std::vector<int> labels;
  std::array<ModalPair, kModalityCount> modalities;  // T, A, V order

  int length() const { return static_cast<int>(labels.size()); }
  const ModalPair& track(Modality m) const { return modalities[static_cast<std::size_t>(m)]; }
  ModalPair& track(Modality m) { return modalities[static_cast<std::size_t>(m)]; }
};

}  // namespace hfl

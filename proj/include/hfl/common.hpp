// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hfl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatches between tensors.
struct ShapeError : Error {
  using Error::Error;
};

// A softmax lane whose entries are all masked out.
struct MaskError : Error {
  using Error::Error;
};

// Non-finite value detected while the guard flag is active.
struct NonFiniteError : Error {
  using Error::Error;
};

// Router preconditions violated (non-finite logits, empty source, ...).
struct RoutingError : Error {
  using Error::Error;
};

// Malformed graphs (dangling edges, node-count mismatches).
struct GraphError : Error {
  using Error::Error;
};

// Invalid synthetic-data specification.
struct SpecError : Error {
  using Error::Error;
};

// Corpus file could not be parsed; message carries the line number.
struct ParseError : Error {
  using Error::Error;
};

// Corpus content disagrees with its header (dims, class count, version).
struct SchemaError : Error {
  using Error::Error;
};

// Bad run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Checkpoint file invalid or incompatible with the given config.
struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace hfl

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace slim {

// Shape disagreement between operands. Messages carry both shapes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A preallocated buffer or cache cannot hold the request.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Index or length outside the valid stored range.
struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Invalid user-supplied configuration (CLI flags, sampler, shard plan).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Cross-worker contract violation (shape disagreement in a collective,
// overlapping vocab shards, divergent replicas).
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A communication slot was registered while still in flight.
struct ContentionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Arithmetic overflow in capacity planning.
struct OverflowError : std::overflow_error {
  using std::overflow_error::overflow_error;
};

}  // namespace slim

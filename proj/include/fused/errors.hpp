#pragma once

#include <stdexcept>
#include <string>

namespace fused {

// Error taxonomy used across the library. The CLI maps each class to a
// distinct exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration values (counts, rates, schema).
struct ConfigError : Error {
  using Error::Error;
};

// Operand shapes do not line up.
struct DimensionError : Error {
  using Error::Error;
};

// Inputs outside an operation's mathematical domain (empty sets,
// out-of-range labels, degenerate vectors).
struct DomainError : Error {
  using Error::Error;
};

// Federated protocol violations (empty aggregation, no eligible clients).
struct ProtocolError : Error {
  using Error::Error;
};

// File read/write failures.
struct IoError : Error {
  using Error::Error;
};

// Checkpoint corruption detected by magic/checksum validation.
struct IntegrityError : Error {
  using Error::Error;
};

// Non-finite values produced during training.
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace fused

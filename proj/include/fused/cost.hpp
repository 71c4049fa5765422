#pragma once

#include <cstdint>

namespace fused {

// Deterministic accounting of a run's work and traffic. Compute is tallied in
// multiply-add counts and converted to seconds at a fixed nominal rate, so
// every report is byte-stable across machines and worker counts.
struct CostLedger {
  std::uint64_t train_flops = 0;
  std::uint64_t bytes_up = 0;    // client -> server
  std::uint64_t bytes_down = 0;  // server -> client
  // What the server must keep to support the run, in parameter units. State,
  // not flow: merging takes the larger footprint.
  std::uint64_t server_storage_units = 0;

  void merge(const CostLedger& other) {
    train_flops += other.train_flops;
    bytes_up += other.bytes_up;
    bytes_down += other.bytes_down;
    if (other.server_storage_units > server_storage_units) {
      server_storage_units = other.server_storage_units;
    }
  }

  // Nominal 1 GFLOP/s device.
  double compute_seconds() const { return static_cast<double>(train_flops) / 1e9; }

  std::uint64_t bytes_total() const { return bytes_up + bytes_down; }
};

}  // namespace fused

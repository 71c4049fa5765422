#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fused/scenario.hpp"

namespace fused {

// theory-check settings: synthetic gradient pair of the given dimension,
// checked at each keep rate.
struct TheorySpec {
  double eta = 0.005;
  int dim = 200;
  int trials = 10000;
  std::vector<double> keep_rates = {0.1, 0.5, 1.0};
};

// storage-report settings. Zero units mean "derive from the experiment":
// model_units = parameter count of the configured model, adapter_units = the
// kept-position count of a mask sampled (from the config seed) over the
// deepest top_k layers.
struct StorageSpec {
  std::vector<int> clients = {10, 50};
  std::vector<int> rounds = {1, 10, 100};
  std::uint64_t model_units = 0;
  std::uint64_t adapter_units = 0;
};

struct AppConfig {
  ExperimentSpec experiment;
  TheorySpec theory;
  StorageSpec storage;
};

// Strict parse: unknown keys anywhere are rejected, as are wrong value types.
// Every key is optional; omitted keys keep the documented defaults.
AppConfig parse_config_text(const std::string& text);
AppConfig load_config(const std::string& path);

}  // namespace fused

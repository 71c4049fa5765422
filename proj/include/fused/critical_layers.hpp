#pragma once

#include <vector>

#include "fused/cost.hpp"
#include "fused/data.hpp"
#include "fused/model.hpp"
#include "fused/rng.hpp"

namespace fused {

// Drift score of one layer after a probe round.
struct LayerDrift {
  int layer_index = 0;  // 1-based
  double diff = 0.0;
};

// Manhattan distance between layer l's parameter blocks (weights and biases)
// of two same-shaped models.
double layer_diff(const LayeredModel& before, const LayeredModel& after, int l);

// layer_diff for every layer, index order 1..L.
std::vector<double> layer_diffs(const LayeredModel& before, const LayeredModel& after);

// Data-volume weighted mean of per-client drift vectors: client k contributes
// its own diff scaled by volume_k / total_volume. per_client[k][l-1] is
// client k's drift of layer l.
std::vector<LayerDrift> aggregate_diffs(const std::vector<std::vector<double>>& per_client,
                                        const std::vector<Eigen::Index>& volumes);

// Sort by drift, largest first; equal drifts break toward the lower layer
// index so the ranking is a deterministic function of its input.
std::vector<LayerDrift> rank_layers(std::vector<LayerDrift> drifts);

struct ProbeConfig {
  int epochs = 2;
  double lr = 0.005;
  int batch_size = 64;
  int top_k = 1;
  // Rank by drift per parameter instead of raw drift. Off by default: raw
  // sums are the primary definition, the flag exists for sensitivity studies
  // of the "larger layers dominate" effect.
  bool normalize_by_param_count = false;
};

struct CriticalLayerResult {
  std::vector<LayerDrift> ranking;  // all layers, descending drift
  std::vector<int> critical;        // top_k layer indices, ranking order
};

// One probe federated round: every client trains epochs of local SGD from the
// shared model, per-layer drifts are measured against it, aggregated by data
// volume, and ranked. The model itself is never changed. trainable_layers
// (optional, 1-based flags) freezes layers during the probe, which is how the
// planted-drift tests isolate a known layer.
CriticalLayerResult identify_critical_layers(const LayeredModel& global,
                                             const std::vector<ClientShard>& clients,
                                             const ProbeConfig& cfg, Rng rng, int workers = 1,
                                             CostLedger* ledger = nullptr,
                                             const std::vector<bool>* trainable_layers = nullptr);

}  // namespace fused

#include "fused/critical_layers.hpp"

#include <algorithm>
#include <cmath>

#include "fused/errors.hpp"
#include "fused/parallel.hpp"
#include "fused/training.hpp"

namespace fused {

double layer_diff(const LayeredModel& before, const LayeredModel& after, int l) {
  const DenseLayer& a = before.layer(l);
  const DenseLayer& b = after.layer(l);
  if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols()) {
    throw DimensionError("layer_diff: weight shapes differ at layer " + std::to_string(l));
  }
  // Plain sequential accumulation in storage order, so the result is exactly
  // reproducible by any straightforward reimplementation.
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.weights.size(); ++i) {
    total += std::abs(a.weights.data()[i] - b.weights.data()[i]);
  }
  for (Eigen::Index i = 0; i < a.biases.size(); ++i) {
    total += std::abs(a.biases.data()[i] - b.biases.data()[i]);
  }
  return total;
}

std::vector<double> layer_diffs(const LayeredModel& before, const LayeredModel& after) {
  if (before.layer_count() != after.layer_count()) {
    throw DimensionError("layer_diffs: models have different layer counts");
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(before.layer_count()));
  for (int l = 1; l <= before.layer_count(); ++l) out.push_back(layer_diff(before, after, l));
  return out;
}

std::vector<LayerDrift> aggregate_diffs(const std::vector<std::vector<double>>& per_client,
                                        const std::vector<Eigen::Index>& volumes) {
  if (per_client.empty()) throw DomainError("aggregate_diffs: no clients");
  if (per_client.size() != volumes.size()) {
    throw DimensionError("aggregate_diffs: client count != volume count");
  }
  const size_t layers = per_client.front().size();
  if (layers == 0) throw DomainError("aggregate_diffs: no layers");

  double total = 0.0;
  for (size_t k = 0; k < volumes.size(); ++k) {
    if (volumes[k] <= 0) throw DomainError("aggregate_diffs: volumes must be positive");
    if (per_client[k].size() != layers) {
      throw DimensionError("aggregate_diffs: ragged per-client drift vectors");
    }
    total += static_cast<double>(volumes[k]);
  }

  std::vector<LayerDrift> out(layers);
  for (size_t l = 0; l < layers; ++l) {
    double acc = 0.0;
    for (size_t k = 0; k < per_client.size(); ++k) {
      acc += (static_cast<double>(volumes[k]) / total) * per_client[k][l];
    }
    out[l].layer_index = static_cast<int>(l) + 1;
    out[l].diff = acc;
  }
  return out;
}

std::vector<LayerDrift> rank_layers(std::vector<LayerDrift> drifts) {
  std::stable_sort(drifts.begin(), drifts.end(), [](const LayerDrift& a, const LayerDrift& b) {
    if (a.diff != b.diff) return a.diff > b.diff;
    return a.layer_index < b.layer_index;
  });
  return drifts;
}

CriticalLayerResult identify_critical_layers(const LayeredModel& global,
                                             const std::vector<ClientShard>& clients,
                                             const ProbeConfig& cfg, Rng rng, int workers,
                                             CostLedger* ledger,
                                             const std::vector<bool>* trainable_layers) {
  if (clients.empty()) throw ProtocolError("identify_critical_layers: no clients");
  if (cfg.top_k < 1 || cfg.top_k > global.layer_count()) {
    throw ConfigError("identify_critical_layers: top_k out of range");
  }
  for (const auto& c : clients) {
    if (c.data.size() == 0) throw ProtocolError("identify_critical_layers: empty client shard");
  }

  const int n = static_cast<int>(clients.size());
  std::vector<std::vector<double>> per_client(static_cast<size_t>(n));
  std::vector<Eigen::Index> volumes(static_cast<size_t>(n));
  std::vector<uint64_t> flops(static_cast<size_t>(n), 0);

  parallel_for(n, workers, [&](int k) {
    const ClientShard& shard = clients[static_cast<size_t>(k)];
    Rng client_rng = rng.derive("probe_client", static_cast<uint64_t>(shard.client_id));
    TrainResult tr = train_local(global, shard.data, cfg.epochs, cfg.lr, cfg.batch_size,
                                 client_rng, trainable_layers);
    per_client[static_cast<size_t>(k)] = layer_diffs(global, tr.model);
    volumes[static_cast<size_t>(k)] = shard.data.size();
    flops[static_cast<size_t>(k)] = tr.flops;
  });

  if (ledger) {
    const uint64_t model_bytes = static_cast<uint64_t>(global.param_count()) * sizeof(double);
    for (int k = 0; k < n; ++k) {
      ledger->train_flops += flops[static_cast<size_t>(k)];
      // Model goes down to each probe client; a drift vector comes back.
      ledger->bytes_down += model_bytes;
      ledger->bytes_up += static_cast<uint64_t>(global.layer_count()) * sizeof(double);
    }
  }

  std::vector<LayerDrift> aggregated = aggregate_diffs(per_client, volumes);
  if (cfg.normalize_by_param_count) {
    for (LayerDrift& d : aggregated) {
      d.diff /= static_cast<double>(layer_param_count(global, d.layer_index));
    }
  }

  CriticalLayerResult result;
  result.ranking = rank_layers(std::move(aggregated));
  for (int i = 0; i < cfg.top_k; ++i) {
    result.critical.push_back(result.ranking[static_cast<size_t>(i)].layer_index);
  }
  return result;
}

}  // namespace fused

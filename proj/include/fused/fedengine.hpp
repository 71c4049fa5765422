#pragma once

#include <functional>
#include <vector>

#include "fused/adapter.hpp"
#include "fused/cost.hpp"
#include "fused/data.hpp"
#include "fused/model.hpp"
#include "fused/rng.hpp"

namespace fused {

struct FedConfig {
  int rounds = 10;
  int local_epochs = 2;
  double lr = 0.005;
  int batch_size = 64;
  int workers = 1;
};

// Called after each aggregation with the fresh global view and the ledger so
// far; lets callers stream per-round logs without the engine knowing about
// evaluation data.
using RoundHook =
    std::function<void(int round, const LayeredModel& current, double mean_loss,
                       const CostLedger& cost_so_far)>;

// Volume-weighted parameter average across same-shaped models.
LayeredModel fedavg_aggregate(const std::vector<LayeredModel>& models,
                              const std::vector<Eigen::Index>& volumes);

struct FedRunResult {
  LayeredModel model;
  CostLedger cost;
  std::vector<double> round_losses;  // volume-weighted client loss per round
};

// Plain synchronous federated SGD: every round each client trains local
// epochs from the current global model, the server averages by data volume.
// Clients are independent tasks; aggregation happens sequentially in client
// order, so results do not depend on worker count.
FedRunResult run_federated(const LayeredModel& init, const std::vector<ClientShard>& clients,
                           const FedConfig& cfg, Rng rng, const RoundHook& hook = {});

struct FusedConfig {
  FedConfig fed;
  double keep_rate = 0.1;
  std::vector<int> critical_layers;
  // Client population before removal, used only for the round-zero model
  // broadcast in the cost ledger. Zero means "same as remaining".
  int total_clients = 0;
};

struct FusedRunResult {
  LayeredModel retained;   // the input model, kept verbatim for reversibility
  AdapterSet adapters;     // final aggregated deltas
  LayeredModel unlearned;  // retained + adapters
  CostLedger cost;
  std::vector<double> round_losses;
};

// Sparse-delta unlearning: the server samples one shared mask over the
// critical layers, every remaining client trains only the delta values on its
// own data against the frozen input model, and the server averages deltas by
// volume. The input model is never modified; per-round traffic is delta
// values only (the mask ships once at setup).
FusedRunResult run_fused_unlearning(const LayeredModel& pretrained,
                                    const std::vector<ClientShard>& remaining,
                                    const FusedConfig& cfg, Rng rng, const RoundHook& hook = {});

// Storage needed to support rollback, in caller-chosen units (parameters,
// bytes, ...). Keeping per-round history for every participant costs
// (clients + 1) * rounds * model_units; keeping one frozen model plus deltas
// costs model_units + adapter_units regardless of round count.
struct StorageModel {
  std::uint64_t history_replay_units = 0;
  std::uint64_t fused_units = 0;
};

StorageModel storage_model(std::uint64_t model_units, std::uint64_t adapter_units,
                           int n_clients, int rounds);

}  // namespace fused

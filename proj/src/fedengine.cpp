#include "fused/fedengine.hpp"

#include <algorithm>

#include "fused/errors.hpp"
#include "fused/parallel.hpp"
#include "fused/training.hpp"

namespace fused {

namespace {

void check_clients(const std::vector<ClientShard>& clients, const LayeredModel& model,
                   const char* where) {
  if (clients.empty()) throw ProtocolError(std::string(where) + ": no clients");
  for (const auto& c : clients) {
    if (c.data.size() == 0) {
      throw ProtocolError(std::string(where) + ": empty shard for client " +
                          std::to_string(c.client_id));
    }
    if (c.data.dim() != model.input_size()) {
      throw DimensionError(std::string(where) + ": shard feature dim != model input");
    }
  }
}

double weighted_loss(const std::vector<double>& losses, const std::vector<Eigen::Index>& volumes) {
  double total = 0.0;
  for (Eigen::Index v : volumes) total += static_cast<double>(v);
  double acc = 0.0;
  for (size_t k = 0; k < losses.size(); ++k) {
    acc += (static_cast<double>(volumes[k]) / total) * losses[k];
  }
  return acc;
}

}  // namespace

LayeredModel fedavg_aggregate(const std::vector<LayeredModel>& models,
                              const std::vector<Eigen::Index>& volumes) {
  if (models.empty()) throw ProtocolError("fedavg_aggregate: no models");
  if (models.size() != volumes.size()) {
    throw DimensionError("fedavg_aggregate: model count != volume count");
  }
  double total = 0.0;
  for (Eigen::Index v : volumes) {
    if (v <= 0) throw DomainError("fedavg_aggregate: volumes must be positive");
    total += static_cast<double>(v);
  }

  LayeredModel out = models.front();
  for (int l = 1; l <= out.layer_count(); ++l) {
    DenseLayer& dst = out.layer(l);
    dst.weights = (static_cast<double>(volumes[0]) / total) * models[0].layer(l).weights;
    dst.biases = (static_cast<double>(volumes[0]) / total) * models[0].layer(l).biases;
    for (size_t k = 1; k < models.size(); ++k) {
      const DenseLayer& src = models[k].layer(l);
      if (src.weights.rows() != dst.weights.rows() || src.weights.cols() != dst.weights.cols()) {
        throw DimensionError("fedavg_aggregate: model shapes differ");
      }
      const double w = static_cast<double>(volumes[k]) / total;
      dst.weights += w * src.weights;
      dst.biases += w * src.biases;
    }
  }
  return out;
}

FedRunResult run_federated(const LayeredModel& init, const std::vector<ClientShard>& clients,
                           const FedConfig& cfg, Rng rng, const RoundHook& hook) {
  check_clients(clients, init, "run_federated");
  if (cfg.rounds < 0) throw ConfigError("run_federated: rounds must be non-negative");

  const int n = static_cast<int>(clients.size());
  const uint64_t model_bytes = static_cast<uint64_t>(init.param_count()) * sizeof(double);

  FedRunResult result;
  result.model = init;
  if (cfg.rounds == 0) return result;  // nothing trained, nothing charged
  result.cost.server_storage_units = static_cast<uint64_t>(init.param_count());

  std::vector<LayeredModel> locals(static_cast<size_t>(n));
  std::vector<Eigen::Index> volumes(static_cast<size_t>(n));
  std::vector<double> losses(static_cast<size_t>(n));
  std::vector<uint64_t> flops(static_cast<size_t>(n));

  for (int round = 0; round < cfg.rounds; ++round) {
    parallel_for(n, cfg.workers, [&](int k) {
      const ClientShard& shard = clients[static_cast<size_t>(k)];
      Rng client_rng = rng.derive("client", static_cast<uint64_t>(shard.client_id),
                                  static_cast<uint64_t>(round));
      TrainResult tr = train_local(result.model, shard.data, cfg.local_epochs, cfg.lr,
                                   cfg.batch_size, client_rng);
      locals[static_cast<size_t>(k)] = std::move(tr.model);
      volumes[static_cast<size_t>(k)] = shard.data.size();
      losses[static_cast<size_t>(k)] = tr.final_loss;
      flops[static_cast<size_t>(k)] = tr.flops;
    });

    result.model = fedavg_aggregate(locals, volumes);
    result.round_losses.push_back(weighted_loss(losses, volumes));
    for (int k = 0; k < n; ++k) {
      result.cost.train_flops += flops[static_cast<size_t>(k)];
      result.cost.bytes_down += model_bytes;
      result.cost.bytes_up += model_bytes;
    }
    if (hook) hook(round, result.model, result.round_losses.back(), result.cost);
  }
  return result;
}

FusedRunResult run_fused_unlearning(const LayeredModel& pretrained,
                                    const std::vector<ClientShard>& remaining,
                                    const FusedConfig& cfg, Rng rng, const RoundHook& hook) {
  check_clients(remaining, pretrained, "run_fused_unlearning");
  if (cfg.fed.rounds < 0) throw ConfigError("run_fused_unlearning: rounds must be non-negative");
  if (cfg.critical_layers.empty()) {
    throw ConfigError("run_fused_unlearning: no critical layers given");
  }
  for (int l : cfg.critical_layers) {
    if (l < 1 || l > pretrained.layer_count()) {
      throw ConfigError("run_fused_unlearning: critical layer index out of range");
    }
  }

  const int n = static_cast<int>(remaining.size());
  const int total_clients = cfg.total_clients > 0 ? cfg.total_clients : n;
  if (total_clients < n) {
    throw ConfigError("run_fused_unlearning: total_clients smaller than remaining");
  }
  const uint64_t model_bytes = static_cast<uint64_t>(pretrained.param_count()) * sizeof(double);

  FusedRunResult result;
  result.retained = pretrained;

  // One shared mask, sampled at the server.
  AdapterSet global =
      make_adapter_set(pretrained, cfg.critical_layers, cfg.keep_rate, rng.derive("mask_setup"));

  if (cfg.fed.rounds == 0) {
    result.adapters = global;
    result.unlearned = apply_adapters(result.retained, result.adapters);
    return result;
  }

  result.cost.server_storage_units =
      static_cast<uint64_t>(pretrained.param_count()) +
      static_cast<uint64_t>(adapter_param_count(global));

  // Round zero: the full model reaches everyone once; remaining clients also
  // receive the mask.
  result.cost.bytes_down += static_cast<uint64_t>(total_clients) * model_bytes;
  result.cost.bytes_down += static_cast<uint64_t>(n) * adapter_setup_bytes(global);

  const uint64_t value_bytes = adapter_value_bytes(global);
  std::vector<AdapterSet> locals(static_cast<size_t>(n));
  std::vector<Eigen::Index> volumes(static_cast<size_t>(n));
  std::vector<double> losses(static_cast<size_t>(n));
  std::vector<uint64_t> flops(static_cast<size_t>(n));

  for (int round = 0; round < cfg.fed.rounds; ++round) {
    parallel_for(n, cfg.fed.workers, [&](int k) {
      const ClientShard& shard = remaining[static_cast<size_t>(k)];
      Rng client_rng = rng.derive("unlearn_client", static_cast<uint64_t>(shard.client_id),
                                  static_cast<uint64_t>(round));
      AdapterTrainResult tr =
          train_adapters_local(result.retained, global, shard.data, cfg.fed.local_epochs,
                               cfg.fed.lr, cfg.fed.batch_size, client_rng);
      locals[static_cast<size_t>(k)] = std::move(tr.adapters);
      volumes[static_cast<size_t>(k)] = shard.data.size();
      losses[static_cast<size_t>(k)] = tr.final_loss;
      flops[static_cast<size_t>(k)] = tr.flops;
    });

    global = fedavg_adapters(locals, volumes);
    result.round_losses.push_back(weighted_loss(losses, volumes));
    for (int k = 0; k < n; ++k) {
      result.cost.train_flops += flops[static_cast<size_t>(k)];
      result.cost.bytes_down += value_bytes;
      result.cost.bytes_up += value_bytes;
    }
    if (hook) {
      hook(round, apply_adapters(result.retained, global), result.round_losses.back(),
           result.cost);
    }
  }

  result.adapters = std::move(global);
  result.unlearned = apply_adapters(result.retained, result.adapters);
  return result;
}

StorageModel storage_model(std::uint64_t model_units, std::uint64_t adapter_units,
                           int n_clients, int rounds) {
  if (n_clients < 1) throw DomainError("storage_model: n_clients must be positive");
  if (rounds < 1) throw DomainError("storage_model: rounds must be positive");
  StorageModel s;
  s.history_replay_units =
      (static_cast<std::uint64_t>(n_clients) + 1) * static_cast<std::uint64_t>(rounds) *
      model_units;
  s.fused_units = model_units + adapter_units;
  return s;
}

}  // namespace fused

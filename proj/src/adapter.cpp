#include "fused/adapter.hpp"

#include <algorithm>
#include <limits>

#include "fused/errors.hpp"
#include "fused/training.hpp"

namespace fused {

namespace {

// Pointer to position `idx` of the layer's flat block (weights then biases).
double* block_at(DenseLayer& layer, std::uint32_t idx) {
  const auto wsize = static_cast<std::uint32_t>(layer.weights.size());
  if (idx < wsize) return layer.weights.data() + idx;
  return layer.biases.data() + (idx - wsize);
}

const double* block_at(const DenseLayer& layer, std::uint32_t idx) {
  const auto wsize = static_cast<std::uint32_t>(layer.weights.size());
  if (idx < wsize) return layer.weights.data() + idx;
  return layer.biases.data() + (idx - wsize);
}

double* grad_at(LayerGrad& g, std::uint32_t idx) {
  const auto wsize = static_cast<std::uint32_t>(g.weights.size());
  if (idx < wsize) return g.weights.data() + idx;
  return g.biases.data() + (idx - wsize);
}

void check_adapter_fits(const SparseAdapter& a, const DenseLayer& layer) {
  if (a.rows != layer.weights.rows() || a.cols != layer.weights.cols()) {
    throw DimensionError("adapter: shape mismatch at layer " + std::to_string(a.layer_index));
  }
  if (a.kept.size() != a.values.size()) {
    throw IntegrityError("adapter: kept/value length mismatch at layer " +
                         std::to_string(a.layer_index));
  }
  const auto limit = static_cast<std::uint64_t>(a.block_size());
  for (std::uint32_t idx : a.kept) {
    if (idx >= limit) {
      throw IntegrityError("adapter: kept index out of range at layer " +
                           std::to_string(a.layer_index));
    }
  }
}

}  // namespace

SparseAdapter make_sparse_adapter(const DenseLayer& layer, int layer_index, double keep_rate,
                                  Rng rng) {
  if (keep_rate <= 0.0 || keep_rate > 1.0) {
    throw DomainError("make_sparse_adapter: keep_rate must lie in (0, 1]");
  }
  SparseAdapter a;
  a.layer_index = layer_index;
  a.rows = layer.weights.rows();
  a.cols = layer.weights.cols();
  a.keep_rate = keep_rate;
  const std::int64_t block = a.block_size();
  if (block > std::numeric_limits<std::uint32_t>::max()) {
    throw DomainError("make_sparse_adapter: layer too large for 32-bit indices");
  }
  for (std::int64_t i = 0; i < block; ++i) {
    if (rng.bernoulli(keep_rate)) a.kept.push_back(static_cast<std::uint32_t>(i));
  }
  a.values.assign(a.kept.size(), 0.0);
  return a;
}

AdapterSet make_adapter_set(const LayeredModel& model, const std::vector<int>& layer_indices,
                            double keep_rate, Rng rng) {
  AdapterSet set;
  std::vector<int> order = layer_indices;
  std::sort(order.begin(), order.end());
  for (int l : order) {
    if (set.count(l)) throw DomainError("make_adapter_set: duplicate layer index");
    Rng layer_rng = rng.derive("mask", static_cast<uint64_t>(l));
    set.emplace(l, make_sparse_adapter(model.layer(l), l, keep_rate, layer_rng));
  }
  return set;
}

LayeredModel apply_adapters(const LayeredModel& model, const AdapterSet& adapters) {
  LayeredModel out = model;
  for (const auto& [l, a] : adapters) {
    DenseLayer& layer = out.layer(l);
    check_adapter_fits(a, layer);
    for (size_t i = 0; i < a.kept.size(); ++i) {
      // Skipping zeros keeps untouched parameters bit-identical (adding 0.0
      // would flip a -0.0 weight to +0.0).
      if (a.values[i] != 0.0) *block_at(layer, a.kept[i]) += a.values[i];
    }
  }
  return out;
}

LayeredModel subtract_adapters(const LayeredModel& model, const AdapterSet& adapters) {
  LayeredModel out = model;
  for (const auto& [l, a] : adapters) {
    DenseLayer& layer = out.layer(l);
    check_adapter_fits(a, layer);
    for (size_t i = 0; i < a.kept.size(); ++i) {
      if (a.values[i] != 0.0) *block_at(layer, a.kept[i]) -= a.values[i];
    }
  }
  return out;
}

std::int64_t adapter_param_count(const AdapterSet& adapters) {
  std::int64_t total = 0;
  for (const auto& [l, a] : adapters) total += a.kept_count();
  return total;
}

LayeredModel merged_model(const MergedContext& ctx) {
  return apply_adapters(ctx.base, ctx.adapters);
}

LayeredModel remove_adapters(const MergedContext& ctx) { return ctx.base; }

AdapterSet train_adapter_step(const LayeredModel& frozen, const AdapterSet& adapters,
                              const Matrix& x, const Labels& y, double lr) {
  if (lr <= 0.0) throw TrainingError("train_adapter_step: lr must be positive");
  LayeredModel merged = apply_adapters(frozen, adapters);
  BackwardResult bw = backward(merged, x, y);
  AdapterSet out = adapters;
  for (auto& [l, a] : out) {
    LayerGrad& g = bw.grads[static_cast<size_t>(l - 1)];
    for (size_t i = 0; i < a.kept.size(); ++i) {
      a.values[i] -= lr * *grad_at(g, a.kept[i]);
    }
  }
  return out;
}

AdapterTrainResult train_adapters_local(const LayeredModel& base, const AdapterSet& start,
                                        const Dataset& data, int epochs, double lr,
                                        int batch_size, Rng rng) {
  if (epochs < 1) throw TrainingError("train_adapters_local: epochs must be positive");
  if (batch_size < 1) throw TrainingError("train_adapters_local: batch_size must be positive");
  if (lr <= 0.0) throw TrainingError("train_adapters_local: lr must be positive");
  if (data.size() == 0) throw TrainingError("train_adapters_local: empty dataset");
  if (data.dim() != base.input_size()) {
    throw DimensionError("train_adapters_local: feature dim does not match model input");
  }

  AdapterTrainResult result;
  result.adapters = start;
  LayeredModel merged = apply_adapters(base, start);

  const Eigen::Index n = data.size();
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng epoch_rng = rng.derive("epoch", static_cast<uint64_t>(epoch));
    epoch_rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    for (Eigen::Index begin = 0; begin < n; begin += batch_size) {
      const Eigen::Index rows = std::min<Eigen::Index>(batch_size, n - begin);
      Matrix x(rows, data.dim());
      Labels y(static_cast<size_t>(rows));
      for (Eigen::Index i = 0; i < rows; ++i) {
        Eigen::Index src = order[static_cast<size_t>(begin + i)];
        x.row(i) = data.features.row(src);
        y[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(src)];
      }

      BackwardResult bw = backward(merged, x, y);
      for (auto& [l, a] : result.adapters) {
        LayerGrad& g = bw.grads[static_cast<size_t>(l - 1)];
        DenseLayer& layer = merged.layer(l);
        for (size_t i = 0; i < a.kept.size(); ++i) {
          const double step = lr * *grad_at(g, a.kept[i]);
          a.values[i] -= step;
          *block_at(layer, a.kept[i]) -= step;
        }
      }

      loss_sum += bw.loss;
      ++batches;
      result.flops += forward_flops(merged, rows) + backward_flops(merged, rows);
    }
    if (epoch == epochs - 1 && batches > 0) result.final_loss = loss_sum / batches;
  }
  return result;
}

AdapterSet fedavg_adapters(const std::vector<AdapterSet>& sets,
                           const std::vector<Eigen::Index>& volumes) {
  if (sets.empty()) throw ProtocolError("fedavg_adapters: no adapter sets");
  if (sets.size() != volumes.size()) {
    throw DimensionError("fedavg_adapters: set count != volume count");
  }
  double total = 0.0;
  for (Eigen::Index v : volumes) {
    if (v <= 0) throw DomainError("fedavg_adapters: volumes must be positive");
    total += static_cast<double>(v);
  }

  const AdapterSet& ref = sets.front();
  for (const AdapterSet& s : sets) {
    if (s.size() != ref.size()) throw ProtocolError("fedavg_adapters: structure mismatch");
    for (const auto& [l, a] : ref) {
      auto it = s.find(l);
      if (it == s.end() || it->second.kept != a.kept || it->second.rows != a.rows ||
          it->second.cols != a.cols) {
        throw ProtocolError("fedavg_adapters: structure mismatch at layer " + std::to_string(l));
      }
    }
  }

  AdapterSet out = ref;
  for (auto& [l, a] : out) {
    for (size_t i = 0; i < a.values.size(); ++i) {
      double acc = 0.0;
      for (size_t k = 0; k < sets.size(); ++k) {
        acc += (static_cast<double>(volumes[k]) / total) *
               sets[k].at(l).values[i];
      }
      a.values[i] = acc;
    }
  }
  return out;
}

std::uint64_t adapter_value_bytes(const AdapterSet& adapters) {
  std::uint64_t total = 0;
  for (const auto& [l, a] : adapters) total += a.kept.size() * sizeof(double);
  return total;
}

std::uint64_t adapter_setup_bytes(const AdapterSet& adapters) {
  std::uint64_t total = 0;
  for (const auto& [l, a] : adapters) {
    total += 16;  // layer index, shape, count
    total += a.kept.size() * sizeof(std::uint32_t);
  }
  return total;
}

}  // namespace fused

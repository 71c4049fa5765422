#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "fused/data.hpp"
#include "fused/model.hpp"
#include "fused/rng.hpp"

namespace fused {

// Trainable sparse delta for one layer. `kept` holds ascending flat indices
// into the layer's parameter block (weights row-major, then biases); `values`
// holds the delta at those positions, zero at birth. Positions outside `kept`
// are structurally zero: they are never stored, so the sparsity pattern can
// not drift during training.
struct SparseAdapter {
  int layer_index = 0;  // 1-based
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  double keep_rate = 0.0;
  std::vector<std::uint32_t> kept;
  std::vector<double> values;

  std::int64_t block_size() const { return rows * cols + cols; }
  std::int64_t kept_count() const { return static_cast<std::int64_t>(kept.size()); }
};

// Keyed by layer index; ordered so iteration is deterministic.
using AdapterSet = std::map<int, SparseAdapter>;

// Sample the mask once: every position of the layer's block is kept with
// probability keep_rate, independently. Values start at zero.
SparseAdapter make_sparse_adapter(const DenseLayer& layer, int layer_index, double keep_rate,
                                  Rng rng);

AdapterSet make_adapter_set(const LayeredModel& model, const std::vector<int>& layer_indices,
                            double keep_rate, Rng rng);

// model + deltas (copy). Zero-valued entries are skipped so a freshly made
// adapter set returns a bit-identical model.
LayeredModel apply_adapters(const LayeredModel& model, const AdapterSet& adapters);

// Exact inverse of apply_adapters up to floating-point cancellation.
LayeredModel subtract_adapters(const LayeredModel& model, const AdapterSet& adapters);

// Total trainable scalars across the set.
std::int64_t adapter_param_count(const AdapterSet& adapters);

// An unlearned model is stored as (frozen base, deltas), never as a single
// mutated weight blob. Restoring the base is therefore retrieval, not
// arithmetic, which is what makes it bit-exact.
struct MergedContext {
  LayeredModel base;
  AdapterSet adapters;
};

// base + deltas, materialized.
LayeredModel merged_model(const MergedContext& ctx);

// The original base model, verbatim. Idempotent by construction.
LayeredModel remove_adapters(const MergedContext& ctx);

// One SGD step on the merged model's loss; only adapter values move, and only
// at kept positions. The frozen base is untouched.
AdapterSet train_adapter_step(const LayeredModel& frozen, const AdapterSet& adapters,
                              const Matrix& x, const Labels& y, double lr);

struct AdapterTrainResult {
  AdapterSet adapters;
  double final_loss = 0.0;
  uint64_t flops = 0;
};

// Mini-batch SGD over adapter values only; the base model stays frozen. Each
// step backpropagates through base+delta and applies the gradient at kept
// positions of the adapted layers.
AdapterTrainResult train_adapters_local(const LayeredModel& base, const AdapterSet& start,
                                        const Dataset& data, int epochs, double lr,
                                        int batch_size, Rng rng);

// Data-volume weighted average of adapter values. All sets must share the
// exact same structure (layers, shapes, kept indices).
AdapterSet fedavg_adapters(const std::vector<AdapterSet>& sets,
                           const std::vector<Eigen::Index>& volumes);

// Per-round wire cost of one direction: just the values (the shared mask is
// sent once at setup, see adapter_setup_bytes).
std::uint64_t adapter_value_bytes(const AdapterSet& adapters);

// One-time cost of shipping the mask itself: per adapter a small fixed header
// plus one 32-bit index per kept position.
std::uint64_t adapter_setup_bytes(const AdapterSet& adapters);

}  // namespace fused

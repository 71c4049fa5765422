#pragma once

#include <cstdint>
#include <vector>

#include "fused/data.hpp"
#include "fused/model.hpp"
#include "fused/rng.hpp"

namespace fused {

struct TrainResult {
  LayeredModel model;
  double final_loss = 0.0;  // mean loss over the last epoch's batches
  uint64_t flops = 0;       // deterministic work estimate
};

// Mini-batch SGD on one client's shard. Batches are drawn by reshuffling the
// sample order each epoch; the final short batch is kept. When
// trainable_layers is given (1-based flags, length = layer count), gradients
// of frozen layers are dropped before the update.
TrainResult train_local(const LayeredModel& start, const Dataset& data, int epochs, double lr,
                        int batch_size, Rng rng,
                        const std::vector<bool>* trainable_layers = nullptr);

// Work estimates used by the cost ledger. Counted as multiply-add pairs of
// the dense forward/backward passes; exact arithmetic on integers so all
// ledger totals are reproducible across machines and worker counts.
uint64_t forward_flops(const LayeredModel& model, Eigen::Index batch_rows);
uint64_t backward_flops(const LayeredModel& model, Eigen::Index batch_rows);
uint64_t train_flops(const LayeredModel& model, Eigen::Index n_samples, int epochs,
                     int batch_size);

}  // namespace fused

#include "fused/training.hpp"

#include <algorithm>
#include <numeric>

#include "fused/errors.hpp"

namespace fused {

namespace {

uint64_t dense_pass_flops(const LayeredModel& model, Eigen::Index rows, bool backward) {
  uint64_t total = 0;
  const uint64_t b = static_cast<uint64_t>(rows);
  for (const DenseLayer& layer : model.layers()) {
    const uint64_t in = static_cast<uint64_t>(layer.in_size());
    const uint64_t out = static_cast<uint64_t>(layer.out_size());
    // Forward: b*in*out multiply-adds plus bias add.
    uint64_t fwd = b * in * out + b * out;
    if (!backward) {
      total += fwd;
    } else {
      // Backward: weight grad (in*b*out), input grad (b*out*in), bias reduce.
      total += 2 * b * in * out + b * out;
    }
  }
  return total;
}

}  // namespace

uint64_t forward_flops(const LayeredModel& model, Eigen::Index batch_rows) {
  return dense_pass_flops(model, batch_rows, false);
}

uint64_t backward_flops(const LayeredModel& model, Eigen::Index batch_rows) {
  return dense_pass_flops(model, batch_rows, true);
}

uint64_t train_flops(const LayeredModel& model, Eigen::Index n_samples, int epochs,
                     int batch_size) {
  if (n_samples <= 0 || epochs <= 0 || batch_size <= 0) return 0;
  // Every sample passes through forward+backward once per epoch, so the total
  // does not depend on how the epoch is chopped into batches.
  uint64_t per_epoch = forward_flops(model, n_samples) + backward_flops(model, n_samples);
  (void)batch_size;
  return per_epoch * static_cast<uint64_t>(epochs);
}

TrainResult train_local(const LayeredModel& start, const Dataset& data, int epochs, double lr,
                        int batch_size, Rng rng,
                        const std::vector<bool>* trainable_layers) {
  if (epochs < 1) throw TrainingError("train_local: epochs must be positive");
  if (batch_size < 1) throw TrainingError("train_local: batch_size must be positive");
  if (lr <= 0.0) throw TrainingError("train_local: lr must be positive");
  if (data.size() == 0) throw TrainingError("train_local: empty dataset");
  if (data.dim() != start.input_size()) {
    throw DimensionError("train_local: feature dim does not match model input");
  }
  if (trainable_layers && static_cast<int>(trainable_layers->size()) != start.layer_count()) {
    throw DimensionError("train_local: trainable_layers length != layer count");
  }

  TrainResult result;
  result.model = start;
  const Eigen::Index n = data.size();

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

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

      BackwardResult bw = backward(result.model, x, y);
      if (trainable_layers) {
        for (int l = 1; l <= result.model.layer_count(); ++l) {
          if (!(*trainable_layers)[static_cast<size_t>(l - 1)]) {
            bw.grads[static_cast<size_t>(l - 1)].weights.setZero();
            bw.grads[static_cast<size_t>(l - 1)].biases.setZero();
          }
        }
      }
      sgd_step_model(result.model, bw.grads, lr);

      loss_sum += bw.loss;
      ++batches;
      result.flops += forward_flops(result.model, rows) + backward_flops(result.model, rows);
    }
    if (epoch == epochs - 1 && batches > 0) {
      result.final_loss = loss_sum / batches;
    }
  }
  return result;
}

}  // namespace fused

#pragma once

#include <cstdint>
#include <vector>

#include "fused/numeric.hpp"
#include "fused/rng.hpp"

namespace fused {

// One fully-connected layer. Weights are in x out, biases 1 x out. For drift
// measurement and adapters the two are treated as a single parameter block,
// flattened weights-first (row-major), biases after.
struct DenseLayer {
  Matrix weights;
  Matrix biases;

  Eigen::Index in_size() const { return weights.rows(); }
  Eigen::Index out_size() const { return weights.cols(); }
  std::int64_t param_count() const { return weights.size() + biases.size(); }
};

// Gradient of one layer, shapes matching the layer's parameters.
struct LayerGrad {
  Matrix weights;
  Matrix biases;
};

// Feedforward classifier: relu between layers, raw logits at the top.
// Layer indices are stable identifiers 1..L throughout the library.
class LayeredModel {
 public:
  LayeredModel() = default;
  explicit LayeredModel(std::vector<DenseLayer> layers);

  int layer_count() const { return static_cast<int>(layers_.size()); }

  // 1-based access; throws on out-of-range indices.
  const DenseLayer& layer(int index) const;
  DenseLayer& layer(int index);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Eigen::Index input_size() const { return layers_.front().in_size(); }
  Eigen::Index output_size() const { return layers_.back().out_size(); }

  std::int64_t param_count() const;

 private:
  std::vector<DenseLayer> layers_;
};

// Gaussian weights with std init_scale * sqrt(2 / fan_in), zero biases.
// layer_sizes is the chain of widths, so n sizes produce n-1 layers; at least
// two are required. init_scale 1.0 is the standard relu-friendly scale.
LayeredModel new_mlp(const std::vector<int>& layer_sizes, double init_scale, Rng rng);

// Batch of logits for x (rows = samples). Pure; never mutates the model.
Matrix forward(const LayeredModel& model, const Matrix& x);

struct BackwardResult {
  double loss = 0.0;
  std::vector<LayerGrad> grads;  // parallel to model layers
};

// Mean cross-entropy loss and its gradient for every layer.
BackwardResult backward(const LayeredModel& model, const Matrix& x, const Labels& labels);

// In-place vanilla SGD update of every layer: p := p - lr * g.
void sgd_step_model(LayeredModel& model, const std::vector<LayerGrad>& grads, double lr);

// Element count of layer l's block (weights + biases), l in 1..L.
std::int64_t layer_param_count(const LayeredModel& model, int l);

// Whole model as one flat vector, layer by layer, weights row-major then
// biases. Inverse of unflatten_parameters.
Vector flatten_parameters(const LayeredModel& model);
void unflatten_parameters(const Vector& flat, LayeredModel& model);

// Gradients flattened in the same order as flatten_parameters.
Vector flatten_gradients(const std::vector<LayerGrad>& grads);

// Restricted flattening over a subset of 1-based layer indices (ascending
// iteration order regardless of the order given).
Vector flatten_parameters(const LayeredModel& model, const std::vector<int>& layer_subset);
Vector flatten_gradients(const std::vector<LayerGrad>& grads, const std::vector<int>& layer_subset);

}  // namespace fused

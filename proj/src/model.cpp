#include "fused/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "fused/errors.hpp"

namespace fused {

LayeredModel::LayeredModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (layers_[i].out_size() != layers_[i + 1].in_size()) {
      throw DimensionError("LayeredModel: layer " + std::to_string(i + 1) + " out size " +
                           std::to_string(layers_[i].out_size()) + " != layer " +
                           std::to_string(i + 2) + " in size");
    }
  }
  for (const auto& l : layers_) {
    if (l.biases.rows() != 1 || l.biases.cols() != l.weights.cols()) {
      throw DimensionError("LayeredModel: bias shape must be 1 x out");
    }
  }
}

const DenseLayer& LayeredModel::layer(int index) const {
  if (index < 1 || index > layer_count()) {
    throw DomainError("LayeredModel::layer: index " + std::to_string(index) +
                      " outside 1.." + std::to_string(layer_count()));
  }
  return layers_[static_cast<std::size_t>(index - 1)];
}

DenseLayer& LayeredModel::layer(int index) {
  return const_cast<DenseLayer&>(static_cast<const LayeredModel&>(*this).layer(index));
}

std::int64_t LayeredModel::param_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers_) n += l.param_count();
  return n;
}

LayeredModel new_mlp(const std::vector<int>& layer_sizes, double init_scale, Rng rng) {
  if (layer_sizes.size() < 2) {
    throw ConfigError("new_mlp: need at least two layer sizes");
  }
  for (int s : layer_sizes) {
    if (s <= 0) throw ConfigError("new_mlp: layer sizes must be positive");
  }
  if (init_scale < 0.0) throw ConfigError("new_mlp: init_scale must be nonnegative");

  std::vector<DenseLayer> layers;
  layers.reserve(layer_sizes.size() - 1);
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    DenseLayer l;
    l.weights = Matrix(layer_sizes[i], layer_sizes[i + 1]);
    // Fan-in scaling keeps activation magnitudes stable through relu stacks.
    const double stddev = init_scale * std::sqrt(2.0 / layer_sizes[i]);
    // Row-major fill order, so a seed pins every weight position.
    for (Eigen::Index k = 0; k < l.weights.size(); ++k) {
      l.weights.data()[k] = stddev * rng.normal();
    }
    l.biases = Matrix::Zero(1, layer_sizes[i + 1]);
    layers.push_back(std::move(l));
  }
  return LayeredModel(std::move(layers));
}

Matrix forward(const LayeredModel& model, const Matrix& x) {
  if (x.cols() != model.input_size()) {
    throw DimensionError("forward: input has " + std::to_string(x.cols()) +
                         " features, model expects " + std::to_string(model.input_size()));
  }
  Matrix h = x;
  const int L = model.layer_count();
  for (int l = 1; l <= L; ++l) {
    const DenseLayer& layer = model.layer(l);
    Matrix z = (h * layer.weights).rowwise() + layer.biases.row(0);
    h = (l < L) ? relu(z).eval() : std::move(z);
  }
  return h;
}

BackwardResult backward(const LayeredModel& model, const Matrix& x, const Labels& labels) {
  const int L = model.layer_count();
  if (x.cols() != model.input_size()) {
    throw DimensionError("backward: input width does not match model");
  }

  // Forward pass keeping pre-activations and layer inputs.
  std::vector<Matrix> inputs;   // inputs[l-1] feeds layer l
  std::vector<Matrix> preacts;  // z of each layer
  inputs.reserve(L);
  preacts.reserve(L);
  Matrix h = x;
  for (int l = 1; l <= L; ++l) {
    const DenseLayer& layer = model.layer(l);
    inputs.push_back(h);
    Matrix z = (h * layer.weights).rowwise() + layer.biases.row(0);
    preacts.push_back(z);
    h = (l < L) ? relu(z).eval() : z;
  }

  auto xent = softmax_cross_entropy(h, labels);

  BackwardResult out;
  out.loss = xent.loss;
  out.grads.resize(static_cast<std::size_t>(L));
  Matrix delta = std::move(xent.grad);  // d loss / d z_L
  for (int l = L; l >= 1; --l) {
    const DenseLayer& layer = model.layer(l);
    LayerGrad& g = out.grads[static_cast<std::size_t>(l - 1)];
    g.weights = inputs[static_cast<std::size_t>(l - 1)].transpose() * delta;
    g.biases = delta.colwise().sum();
    if (l > 1) {
      Matrix back = delta * layer.weights.transpose();
      delta = back.cwiseProduct(relu_grad(preacts[static_cast<std::size_t>(l - 2)]));
    }
  }
  return out;
}

void sgd_step_model(LayeredModel& model, const std::vector<LayerGrad>& grads, double lr) {
  if (static_cast<int>(grads.size()) != model.layer_count()) {
    throw DimensionError("sgd_step_model: gradient count != layer count");
  }
  if (lr <= 0.0) throw DomainError("sgd_step_model: lr must be positive");
  for (int l = 1; l <= model.layer_count(); ++l) {
    DenseLayer& layer = model.layer(l);
    const LayerGrad& g = grads[static_cast<std::size_t>(l - 1)];
    if (g.weights.rows() != layer.weights.rows() || g.weights.cols() != layer.weights.cols() ||
        g.biases.rows() != layer.biases.rows() || g.biases.cols() != layer.biases.cols()) {
      throw DimensionError("sgd_step_model: gradient shape mismatch at layer " +
                           std::to_string(l));
    }
    layer.weights -= lr * g.weights;
    layer.biases -= lr * g.biases;
  }
}

std::int64_t layer_param_count(const LayeredModel& model, int l) {
  return model.layer(l).param_count();
}

Vector flatten_parameters(const LayeredModel& model) {
  Vector flat(model.param_count());
  Eigen::Index at = 0;
  for (const auto& l : model.layers()) {
    std::copy(l.weights.data(), l.weights.data() + l.weights.size(), flat.data() + at);
    at += l.weights.size();
    std::copy(l.biases.data(), l.biases.data() + l.biases.size(), flat.data() + at);
    at += l.biases.size();
  }
  return flat;
}

void unflatten_parameters(const Vector& flat, LayeredModel& model) {
  if (flat.size() != model.param_count()) {
    throw DimensionError("unflatten_parameters: size mismatch");
  }
  Eigen::Index at = 0;
  for (auto& l : model.layers()) {
    std::copy(flat.data() + at, flat.data() + at + l.weights.size(), l.weights.data());
    at += l.weights.size();
    std::copy(flat.data() + at, flat.data() + at + l.biases.size(), l.biases.data());
    at += l.biases.size();
  }
}

Vector flatten_gradients(const std::vector<LayerGrad>& grads) {
  Eigen::Index total = 0;
  for (const auto& g : grads) total += g.weights.size() + g.biases.size();
  Vector flat(total);
  Eigen::Index at = 0;
  for (const auto& g : grads) {
    std::copy(g.weights.data(), g.weights.data() + g.weights.size(), flat.data() + at);
    at += g.weights.size();
    std::copy(g.biases.data(), g.biases.data() + g.biases.size(), flat.data() + at);
    at += g.biases.size();
  }
  return flat;
}

namespace {

std::set<int> checked_subset(int layer_count, const std::vector<int>& subset) {
  std::set<int> s(subset.begin(), subset.end());
  for (int l : s) {
    if (l < 1 || l > layer_count) {
      throw DomainError("layer subset index " + std::to_string(l) + " outside 1.." +
                        std::to_string(layer_count));
    }
  }
  return s;
}

}  // namespace

Vector flatten_parameters(const LayeredModel& model, const std::vector<int>& layer_subset) {
  const auto s = checked_subset(model.layer_count(), layer_subset);
  Eigen::Index total = 0;
  for (int l : s) total += layer_param_count(model, l);
  Vector flat(total);
  Eigen::Index at = 0;
  for (int l : s) {
    const auto& layer = model.layer(l);
    std::copy(layer.weights.data(), layer.weights.data() + layer.weights.size(), flat.data() + at);
    at += layer.weights.size();
    std::copy(layer.biases.data(), layer.biases.data() + layer.biases.size(), flat.data() + at);
    at += layer.biases.size();
  }
  return flat;
}

Vector flatten_gradients(const std::vector<LayerGrad>& grads, const std::vector<int>& layer_subset) {
  const auto s = checked_subset(static_cast<int>(grads.size()), layer_subset);
  Eigen::Index total = 0;
  for (int l : s) {
    const auto& g = grads[static_cast<std::size_t>(l - 1)];
    total += g.weights.size() + g.biases.size();
  }
  Vector flat(total);
  Eigen::Index at = 0;
  for (int l : s) {
    const auto& g = grads[static_cast<std::size_t>(l - 1)];
    std::copy(g.weights.data(), g.weights.data() + g.weights.size(), flat.data() + at);
    at += g.weights.size();
    std::copy(g.biases.data(), g.biases.data() + g.biases.size(), flat.data() + at);
    at += g.biases.size();
  }
  return flat;
}

}  // namespace fused

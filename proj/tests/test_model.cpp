#include <cmath>

#include "doctest.h"
#include "fused/errors.hpp"
#include "fused/model.hpp"

using namespace fused;

namespace {

LayeredModel tiny_model(std::uint64_t seed = 1) {
  return new_mlp({4, 6, 3}, 1.0, Rng(seed));
}

Matrix random_batch(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("new_mlp builds the requested chain") {
  LayeredModel m = new_mlp({5, 8, 7, 2}, 1.0, Rng(3));
  REQUIRE(m.layer_count() == 3);
  CHECK(m.layer(1).in_size() == 5);
  CHECK(m.layer(1).out_size() == 8);
  CHECK(m.layer(2).in_size() == 8);
  CHECK(m.layer(3).out_size() == 2);
  CHECK(m.input_size() == 5);
  CHECK(m.output_size() == 2);
  CHECK(m.param_count() == (5 * 8 + 8) + (8 * 7 + 7) + (7 * 2 + 2));
  CHECK(layer_param_count(m, 1) == 5 * 8 + 8);
  CHECK(layer_param_count(m, 3) == 7 * 2 + 2);
  // biases start at zero
  CHECK(m.layer(1).biases.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("new_mlp validates its arguments") {
  CHECK_THROWS_AS(new_mlp({4}, 1.0, Rng(1)), ConfigError);
  CHECK_THROWS_AS(new_mlp({4, 0, 3}, 1.0, Rng(1)), ConfigError);
  CHECK_THROWS_AS(new_mlp({4, 3}, -1.0, Rng(1)), ConfigError);
}

TEST_CASE("layer access is 1-based and bounds-checked") {
  LayeredModel m = tiny_model();
  CHECK_NOTHROW(m.layer(1));
  CHECK_NOTHROW(m.layer(2));
  CHECK_THROWS_AS(m.layer(0), DomainError);
  CHECK_THROWS_AS(m.layer(3), DomainError);
  CHECK_THROWS_AS(layer_param_count(m, 0), DomainError);
}

TEST_CASE("forward output shape and input validation") {
  LayeredModel m = tiny_model();
  Rng rng(8);
  Matrix x = random_batch(10, 4, rng);
  Matrix logits = forward(m, x);
  CHECK(logits.rows() == 10);
  CHECK(logits.cols() == 3);
  Matrix bad = random_batch(10, 5, rng);
  CHECK_THROWS_AS(forward(m, bad), DimensionError);
}

TEST_CASE("forward is deterministic and pure") {
  LayeredModel m = tiny_model();
  Rng rng(9);
  Matrix x = random_batch(6, 4, rng);
  Vector before = flatten_parameters(m);
  Matrix a = forward(m, x);
  Matrix b = forward(m, x);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((flatten_parameters(m) - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward returns one gradient per layer with matching shapes") {
  LayeredModel m = tiny_model();
  Rng rng(10);
  Matrix x = random_batch(5, 4, rng);
  Labels y = {0, 1, 2, 0, 1};
  BackwardResult res = backward(m, x, y);
  REQUIRE(res.grads.size() == 2);
  for (int l = 1; l <= 2; ++l) {
    CHECK(res.grads[(size_t)l - 1].weights.rows() == m.layer(l).weights.rows());
    CHECK(res.grads[(size_t)l - 1].weights.cols() == m.layer(l).weights.cols());
    CHECK(res.grads[(size_t)l - 1].biases.cols() == m.layer(l).biases.cols());
  }
  CHECK(res.loss > 0.0);
}

TEST_CASE("finite differences confirm backward on a fixed instance") {
  LayeredModel m = tiny_model(7);
  Rng rng(12);
  Matrix x = random_batch(4, 4, rng);
  Labels y = {2, 0, 1, 2};
  BackwardResult res = backward(m, x, y);
  Vector analytic = flatten_gradients(res.grads);

  const double h = 1e-6;
  Vector flat = flatten_parameters(m);
  for (Eigen::Index i = 0; i < flat.size(); i += 7) {  // sample every 7th parameter
    Vector bumped = flat;
    bumped(i) = flat(i) + h;
    LayeredModel plus = m;
    unflatten_parameters(bumped, plus);
    bumped(i) = flat(i) - h;
    LayeredModel minus = m;
    unflatten_parameters(bumped, minus);
    double fd = (backward(plus, x, y).loss - backward(minus, x, y).loss) / (2.0 * h);
    CHECK(analytic(i) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("sgd_step_model applies p -= lr * g to every layer") {
  LayeredModel m = tiny_model();
  Matrix x(2, 4);
  x << 1.0, 0.5, -0.5, 0.2, -1.0, 0.3, 0.8, -0.2;
  Labels y = {0, 2};
  BackwardResult res = backward(m, x, y);
  LayeredModel stepped = m;
  sgd_step_model(stepped, res.grads, 0.1);
  for (int l = 1; l <= 2; ++l) {
    Matrix want = m.layer(l).weights - 0.1 * res.grads[(size_t)l - 1].weights;
    CHECK((stepped.layer(l).weights - want).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(sgd_step_model(m, res.grads, 0.0), DomainError);
}

TEST_CASE("flatten and unflatten round-trip") {
  LayeredModel m = tiny_model(5);
  Vector flat = flatten_parameters(m);
  CHECK(flat.size() == m.param_count());
  LayeredModel other = tiny_model(6);
  unflatten_parameters(flat, other);
  Vector again = flatten_parameters(other);
  CHECK((flat - again).cwiseAbs().maxCoeff() == 0.0);
  // wrong length rejected
  Vector shortv = flat.head(flat.size() - 1);
  CHECK_THROWS_AS(unflatten_parameters(shortv, other), DimensionError);
}

TEST_CASE("flat layout is layer-major, weights before biases") {
  LayeredModel m = tiny_model();
  Vector flat = flatten_parameters(m);
  // First entry is weights(0,0) of layer 1; bias block of layer 1 follows the
  // 4x6 weight block.
  CHECK(flat(0) == m.layer(1).weights(0, 0));
  CHECK(flat(4 * 6) == m.layer(1).biases(0, 0));
  CHECK(flat(4 * 6 + 6) == m.layer(2).weights(0, 0));
}

TEST_CASE("layer-subset flattening iterates ascending") {
  LayeredModel m = new_mlp({3, 4, 5, 2}, 1.0, Rng(2));
  Vector sub = flatten_parameters(m, {3, 1});
  CHECK(sub.size() == layer_param_count(m, 1) + layer_param_count(m, 3));
  CHECK(sub(0) == m.layer(1).weights(0, 0));
  CHECK(sub(layer_param_count(m, 1)) == m.layer(3).weights(0, 0));
  CHECK_THROWS_AS(flatten_parameters(m, {0}), DomainError);
  CHECK_THROWS_AS(flatten_parameters(m, {4}), DomainError);
}

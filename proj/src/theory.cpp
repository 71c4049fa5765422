#include "fused/theory.hpp"

#include <cmath>
#include <limits>

#include "fused/errors.hpp"

namespace fused {

namespace {

// Plain ascending-index accumulation. Every quantity the bit-exactness
// contract covers (prediction, per-trial value, their p=1 equality) is built
// from this one loop so their rounding histories coincide.
double dot_flat(const Vector& a, const Vector& b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void check_probe(const TheoryProbe& probe) {
  if (probe.grad_t1.size() != probe.grad_t2.size() ||
      (probe.theta1.size() != 0 && probe.theta1.size() != probe.grad_t1.size())) {
    throw DimensionError("theory probe: vector lengths differ");
  }
  if (probe.grad_t1.size() == 0) throw DomainError("theory probe: empty gradients");
  if (probe.eta <= 0.0) throw DomainError("theory probe: eta must be positive");
  if (probe.keep_rate <= 0.0 || probe.keep_rate > 1.0) {
    throw DomainError("theory probe: keep_rate must lie in (0, 1]");
  }
}

}  // namespace

double gradient_cosine(const TheoryProbe& probe) {
  check_probe(probe);
  const double n1 = std::sqrt(dot_flat(probe.grad_t1, probe.grad_t1));
  const double n2 = std::sqrt(dot_flat(probe.grad_t2, probe.grad_t2));
  if (n1 == 0.0 || n2 == 0.0) {
    throw DomainError("gradient_cosine: zero-norm gradient is degenerate");
  }
  double c = dot_flat(probe.grad_t1, probe.grad_t2) / (n1 * n2);
  return std::min(1.0, std::max(-1.0, c));
}

double predicted_degradation(const TheoryProbe& probe) {
  check_probe(probe);
  return -(probe.eta * dot_flat(probe.grad_t1, probe.grad_t2));
}

MaskedCheckResult masked_expectation_check(const TheoryProbe& probe, int trials, Rng rng) {
  check_probe(probe);
  if (trials < 1000) throw DomainError("masked_expectation_check: need at least 1000 trials");

  const Eigen::Index n = probe.grad_t1.size();
  std::vector<double> samples(static_cast<size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    Rng trial_rng = rng.derive("trial", static_cast<uint64_t>(t));
    double acc = 0.0;
    if (probe.keep_rate == 1.0) {
      // Degenerate mask: identical expression to the prediction below.
      acc = dot_flat(probe.grad_t1, probe.grad_t2);
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (trial_rng.bernoulli(probe.keep_rate)) acc += probe.grad_t1[i] * probe.grad_t2[i];
      }
    }
    samples[static_cast<size_t>(t)] = -(probe.eta * acc);
  }

  MaskedCheckResult result;
  result.trials = trials;
  result.predicted = -(probe.eta * (probe.keep_rate * dot_flat(probe.grad_t1, probe.grad_t2)));

  // Mean relative to the first sample: when every trial is identical the sum
  // of differences is exactly zero and the mean equals that value bit for
  // bit.
  const double base = samples[0];
  double diff_sum = 0.0;
  for (double s : samples) diff_sum += s - base;
  result.empirical_mean = base + diff_sum / trials;

  double var_sum = 0.0;
  for (double s : samples) {
    const double d = s - result.empirical_mean;
    var_sum += d * d;
  }
  result.sample_std = trials > 1 ? std::sqrt(var_sum / (trials - 1)) : 0.0;

  const double err = std::abs(result.empirical_mean - result.predicted);
  if (result.sample_std == 0.0) {
    result.z_score = err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    result.z_score = err / (result.sample_std / std::sqrt(static_cast<double>(trials)));
  }
  return result;
}

TaskPair make_task_pair(const Dataset& base, Rng rng) {
  if (base.size() < 2) throw DomainError("make_task_pair: need at least 2 samples");
  if (base.class_count < 2) throw DomainError("make_task_pair: need at least 2 classes");

  std::vector<Eigen::Index> order(static_cast<size_t>(base.size()));
  for (Eigen::Index i = 0; i < base.size(); ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order);

  const Eigen::Index half = base.size() / 2;
  auto take = [&](Eigen::Index begin, Eigen::Index end, bool rotate) {
    Dataset out;
    out.features.resize(end - begin, base.dim());
    out.labels.resize(static_cast<size_t>(end - begin));
    out.class_count = base.class_count;
    for (Eigen::Index i = begin; i < end; ++i) {
      Eigen::Index src = order[static_cast<size_t>(i)];
      out.features.row(i - begin) = base.features.row(src);
      int y = base.labels[static_cast<size_t>(src)];
      out.labels[static_cast<size_t>(i - begin)] = rotate ? (y + 1) % base.class_count : y;
    }
    return out;
  };

  TaskPair pair;
  pair.task1 = take(0, half, false);
  pair.task2 = take(half, base.size(), true);
  return pair;
}

TheoryProbe probe_from_model(const LayeredModel& model, const Dataset& task1,
                             const Dataset& task2, double eta, double keep_rate,
                             const std::vector<int>* layer_subset) {
  BackwardResult b1 = backward(model, task1.features, task1.labels);
  BackwardResult b2 = backward(model, task2.features, task2.labels);

  TheoryProbe probe;
  probe.eta = eta;
  probe.keep_rate = keep_rate;
  if (layer_subset) {
    probe.theta1 = flatten_parameters(model, *layer_subset);
    probe.grad_t1 = flatten_gradients(b1.grads, *layer_subset);
    probe.grad_t2 = flatten_gradients(b2.grads, *layer_subset);
  } else {
    probe.theta1 = flatten_parameters(model);
    probe.grad_t1 = flatten_gradients(b1.grads);
    probe.grad_t2 = flatten_gradients(b2.grads);
  }
  return probe;
}

double actual_degradation(const LayeredModel& model, const Dataset& task1, const Dataset& task2,
                          double eta, const std::vector<int>* layer_subset) {
  if (eta <= 0.0) throw DomainError("actual_degradation: eta must be positive");
  BackwardResult b2 = backward(model, task2.features, task2.labels);

  LayeredModel stepped = model;
  for (int l = 1; l <= model.layer_count(); ++l) {
    if (layer_subset) {
      bool in = false;
      for (int s : *layer_subset) in = in || (s == l);
      if (!in) continue;
    }
    DenseLayer& layer = stepped.layer(l);
    const LayerGrad& g = b2.grads[static_cast<size_t>(l - 1)];
    layer.weights -= eta * g.weights;
    layer.biases -= eta * g.biases;
  }

  const double before = backward(model, task1.features, task1.labels).loss;
  const double after = backward(stepped, task1.features, task1.labels).loss;
  return after - before;
}

}  // namespace fused

#pragma once

#include <vector>

#include "fused/data.hpp"
#include "fused/model.hpp"
#include "fused/rng.hpp"

namespace fused {

// Snapshot of a two-task interference configuration: parameters after
// training task 1, both task gradients at that point, a step size, and the
// keep probability of the sparse update.
struct TheoryProbe {
  Vector theta1;
  Vector grad_t1;
  Vector grad_t2;
  double eta = 0.0;
  double keep_rate = 1.0;
};

// Cosine similarity between the two task gradients, in [-1, 1]. Throws on a
// zero-norm gradient.
double gradient_cosine(const TheoryProbe& probe);

// First-order change of task-1 loss after one task-2 step of size eta:
// -eta * <g1, g2> (equivalently -eta * |g1| * |g2| * cosine).
double predicted_degradation(const TheoryProbe& probe);

struct MaskedCheckResult {
  double empirical_mean = 0.0;
  double predicted = 0.0;  // -eta * keep_rate * <g1, g2>
  double z_score = 0.0;
  double sample_std = 0.0;
  int trials = 0;
};

// Monte-Carlo check of the masked-update expectation: sample Bernoulli masks
// over coordinates, measure the first-order degradation of each masked step,
// and compare the mean against the closed form. With keep_rate == 1 every
// trial and the prediction are the same expression evaluated in the same
// order, so the comparison is bit-exact. Requires trials >= 1000.
MaskedCheckResult masked_expectation_check(const TheoryProbe& probe, int trials, Rng rng);

struct TaskPair {
  Dataset task1;
  Dataset task2;
};

// Two disjoint halves of a dataset; the second half's labels are rotated by
// one class, giving a pair of genuinely conflicting tasks.
TaskPair make_task_pair(const Dataset& base, Rng rng);

// Probe built from a live model: gradients of both tasks at the model's
// current parameters. layer_subset (1-based, optional) restricts parameters
// and gradients to those layers, matching the sparse-update case.
TheoryProbe probe_from_model(const LayeredModel& model, const Dataset& task1,
                             const Dataset& task2, double eta, double keep_rate,
                             const std::vector<int>* layer_subset = nullptr);

// Measured task-1 loss change after actually taking the task-2 step:
// L1(theta - eta*g2) - L1(theta), with g2 restricted to layer_subset when
// given. The reference the first-order prediction is judged against.
double actual_degradation(const LayeredModel& model, const Dataset& task1, const Dataset& task2,
                          double eta, const std::vector<int>* layer_subset = nullptr);

}  // namespace fused

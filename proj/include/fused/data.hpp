#pragma once

#include <string>
#include <vector>

#include "fused/numeric.hpp"
#include "fused/rng.hpp"

namespace fused {

// Labeled feature matrix. Labels lie in [0, class_count).
struct Dataset {
  Matrix features;  // n x d
  Labels labels;    // length n
  int class_count = 0;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

// One client's slice of the training data. source_indices maps each local row
// back to the row of the dataset the partition was built from, which is what
// lets attack annotations and partition checks follow samples across clients.
struct ClientShard {
  int client_id = 0;
  Dataset data;
  bool is_unlearn_target = false;
  std::vector<Eigen::Index> attacked_indices;  // local row indices
  std::vector<Eigen::Index> source_indices;
};

// Gaussian blobs, one unit-norm mean per class, per_class samples each,
// isotropic noise of the given spread, shuffled.
Dataset gen_synthetic(int classes, int dim, int per_class, double spread, Rng rng);

// Split off the first train_per_class samples of every class (in current row
// order) as a training set; the rest become the test set.
std::pair<Dataset, Dataset> split_by_class_counts(const Dataset& ds, int train_per_class);

// Non-IID split: for each class, client proportions are drawn from a
// symmetric Dirichlet(alpha). Every sample lands in exactly one shard and no
// shard is left empty (one sample is moved from the largest shard to any
// empty one).
std::vector<ClientShard> dirichlet_partition(const Dataset& ds, int n_clients, double alpha,
                                             Rng rng);

// Byzantine relabeling: every label y becomes (y+1) mod C. Marks the whole
// shard as attacked and as an unlearning target. Features untouched.
ClientShard apply_label_flip(const ClientShard& shard, Rng rng);

struct BackdoorResult {
  Dataset data;
  std::vector<Eigen::Index> attacked_indices;  // rows poisoned
};

// Poison ceil(fraction * n) random samples: last feature := trigger_value,
// label := target_label. fraction must lie in (0, 1].
BackdoorResult apply_backdoor(const Dataset& ds, double fraction, double trigger_value,
                              int target_label, Rng rng);

// Stamp the trigger on every sample, keeping true labels. This is the probe
// set used to measure backdoor success and class-0 precision.
Dataset apply_trigger(const Dataset& ds, double trigger_value);

// Copy the shard keeping only the given local rows (ascending order).
ClientShard filter_shard(const ClientShard& shard, const std::vector<Eigen::Index>& keep_rows);

// Rows of ds whose label is (or is not) in the given class set.
Dataset select_by_classes(const Dataset& ds, const std::vector<int>& classes, bool keep);

// Fill each shard's attacked_indices from dataset-level attacked rows, using
// source_indices for the mapping.
void mark_attacked(std::vector<ClientShard>& shards,
                   const std::vector<Eigen::Index>& attacked_source_rows);

// Comma-separated export/import: header f0..f{d-1},label, one row per sample.
void export_csv(const Dataset& ds, const std::string& path);
Dataset import_csv(const std::string& path);

}  // namespace fused

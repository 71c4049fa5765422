#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fused/critical_layers.hpp"
#include "fused/data.hpp"
#include "fused/fedengine.hpp"
#include "fused/metrics.hpp"
#include "fused/model.hpp"
#include "fused/rng.hpp"

namespace fused {

enum class ScenarioKind { Client, Class, Sample };

struct DataSpec {
  int classes = 10;
  int dim = 32;
  int train_per_class = 100;
  int test_per_class = 50;
  double spread = 0.25;
};

struct ModelSpec {
  std::vector<int> hidden = {64, 64};
  double init_scale = 1.0;
};

struct PartitionSpec {
  int n_clients = 10;
  double alpha = 1.0;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::Client;
  std::vector<int> target_clients = {0};  // client unlearning
  std::vector<int> target_classes = {0};  // class unlearning
  double backdoor_fraction = 0.1;         // sample unlearning
  double trigger_value = 2.5;
  int backdoor_target_label = 0;
  int relearn_rounds = 5;
};

struct UnlearnSpec {
  int rounds = 20;
  int probe_epochs = 2;
  int top_k = 1;
  double keep_rate = 0.1;
  double lr = 0.0;  // 0 = reuse the experiment lr
  bool normalize_by_param_count = false;
};

struct EvalSpec {
  bool retraining_oracle = true;
  bool relearn = false;
  bool mia = true;
};

struct ExperimentSpec {
  DataSpec data;
  ModelSpec model;
  PartitionSpec partition;
  int pretrain_rounds = 20;
  int local_epochs = 2;
  double lr = 0.2;
  int batch_size = 64;
  Scenario scenario;
  UnlearnSpec unlearn;
  EvalSpec eval;
  std::uint64_t seed = 1;
  int workers = 1;

  // Streaming hooks for per-round logging. Not part of the config file and
  // never hashed into the digest; they observe, they must not steer.
  RoundHook pretrain_hook;
  RoundHook unlearn_hook;
};

// Everything a scenario run produces. The models and datasets are kept so
// callers (reports, tests) can re-derive any quantity without re-running.
struct ScenarioResult {
  LayeredModel pretrained;  // the model before unlearning
  CriticalLayerResult layers;
  FusedRunResult fused;
  CostLedger identify_cost;
  CostLedger pretrain_cost;

  std::optional<LayeredModel> oracle;  // retraining result
  CostLedger oracle_cost;

  RunMetrics fused_metrics;
  std::optional<RunMetrics> oracle_metrics;

  Dataset clean_test;
  Dataset forgotten_eval;                // the FA evaluation set
  std::optional<Dataset> triggered_test;  // sample scenario only
  std::vector<ClientShard> shards;       // pretraining population
  std::vector<ClientShard> remaining;    // unlearning participants
};

// Full pipeline: synthesize data, partition, inject the scenario's attack,
// pretrain, identify critical layers, unlearn with sparse deltas, evaluate,
// and (when enabled) run the retraining oracle for comparison.
ScenarioResult run_scenario(const ExperimentSpec& spec);

// Pipeline prefix ending at the drift ranking; what the identify command
// runs.
struct IdentifyResult {
  LayeredModel pretrained;
  CriticalLayerResult layers;
  CostLedger pretrain_cost;
  CostLedger identify_cost;
};

IdentifyResult run_identify_only(const ExperimentSpec& spec);

// Just the retraining oracle for the configured scenario: fresh model on the
// remaining data. Uses the same derived seed streams as run_scenario, so its
// result matches the oracle embedded in a full run.
struct RetrainOnlyResult {
  LayeredModel model;
  CostLedger cost;
  RunMetrics metrics;
};

RetrainOnlyResult run_retraining_only(const ExperimentSpec& spec);

// The evaluation sets a scenario run would construct, regenerated without any
// training. Byte-for-byte the sets run_scenario uses (same seed derivation).
struct EvalSets {
  Dataset clean_test;
  Dataset forgotten_eval;
  Dataset remaining_eval;
  std::optional<Dataset> triggered_test;
};

EvalSets make_eval_sets(const ExperimentSpec& spec);

// First `max_rows` rows of the clean test set; the probe batch restore
// verification runs logits on.
Dataset make_probe_batch(const ExperimentSpec& spec, int max_rows = 256);

// Continue federated training from `start` on all shards (forgotten data
// back in the pool) and report accuracy on the forgotten evaluation set.
// Lower after `rounds` relearning rounds means deeper erasure.
double run_relearn(const LayeredModel& start, const std::vector<ClientShard>& all_shards,
                   const Dataset& forgotten_eval, int rounds, const FedConfig& cfg, Rng rng);

// Knowledge-interference probe: the target client holds all of one class and
// 90% of another (the overlap class); everyone else shares the rest. After
// client unlearning, accuracy is reported on the three knowledge partitions:
// unique-to-target (f), overlapping (c), unique-to-remaining (r), for the
// sparse-delta method, a naive all-parameter fine-tune on remaining data, and
// the retraining oracle.
struct InterferenceSpec {
  DataSpec data;
  ModelSpec model;
  int n_clients = 10;
  double alpha = 1.0;
  int pretrain_rounds = 20;
  int unlearn_rounds = 20;
  int local_epochs = 2;
  double lr = 0.2;
  int batch_size = 64;
  int unique_class = 1;   // fully owned by the target client
  int overlap_class = 0;  // split 90/10 between target and the rest
  UnlearnSpec unlearn;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct InterferenceMethodResult {
  double f_acc = 0.0;
  double c_acc = 0.0;
  double r_acc = 0.0;
};

struct InterferenceResult {
  InterferenceMethodResult fused;
  InterferenceMethodResult naive_finetune;
  InterferenceMethodResult oracle;
};

InterferenceResult run_interference_probe(const InterferenceSpec& spec);

// FNV-1a digest of a canonical text rendering of an ExperimentSpec,
// hex-encoded; what report sidecars record as config_digest.
std::string config_digest(const ExperimentSpec& spec);

}  // namespace fused

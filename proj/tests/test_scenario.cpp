#include <cstring>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "fused/adapter.hpp"
#include "fused/errors.hpp"
#include "fused/scenario.hpp"

using namespace fused;

namespace {

// Small, fast experiment used throughout this file.
ExperimentSpec tiny_spec() {
  ExperimentSpec spec;
  spec.data.classes = 4;
  spec.data.dim = 8;
  spec.data.train_per_class = 30;
  spec.data.test_per_class = 15;
  spec.data.spread = 0.3;
  spec.model.hidden = {12};
  spec.partition.n_clients = 4;
  spec.partition.alpha = 1.0;
  spec.pretrain_rounds = 3;
  spec.local_epochs = 1;
  spec.lr = 0.2;
  spec.batch_size = 16;
  spec.unlearn.rounds = 3;
  spec.unlearn.probe_epochs = 1;
  spec.unlearn.top_k = 1;
  spec.unlearn.keep_rate = 0.3;
  spec.seed = 5;
  return spec;
}

bool datasets_bitwise_equal(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size() || a.dim() != b.dim() || a.class_count != b.class_count) return false;
  if (a.labels != b.labels) return false;
  return std::memcmp(a.features.data(), b.features.data(),
                     sizeof(double) * (size_t)a.features.size()) == 0;
}

bool models_bitwise_equal(const LayeredModel& a, const LayeredModel& b) {
  Vector va = flatten_parameters(a);
  Vector vb = flatten_parameters(b);
  if (va.size() != vb.size()) return false;
  return std::memcmp(va.data(), vb.data(), sizeof(double) * (size_t)va.size()) == 0;
}

}  // namespace

TEST_CASE("spec validation rejects inconsistent setups") {
  ExperimentSpec s = tiny_spec();
  s.partition.n_clients = 1;
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.unlearn.keep_rate = 0.0;
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.unlearn.lr = -0.1;
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.unlearn.top_k = 5;  // only 2 layers exist
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.scenario.target_clients = {9};
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.scenario.target_clients = {0, 0};
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.scenario.target_clients = {0, 1, 2, 3};  // nobody left
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.scenario.kind = ScenarioKind::Class;
  s.scenario.target_classes = {7};
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.scenario.kind = ScenarioKind::Class;
  s.scenario.target_classes = {0, 1, 2, 3};
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.scenario.kind = ScenarioKind::Sample;
  s.scenario.backdoor_fraction = 1.5;
  CHECK_THROWS_AS(run_scenario(s), ConfigError);

  s = tiny_spec();
  s.scenario.kind = ScenarioKind::Sample;
  s.scenario.backdoor_target_label = -1;
  CHECK_THROWS_AS(run_scenario(s), ConfigError);
}

TEST_CASE("config digest is stable, hex, and sensitive to every knob") {
  ExperimentSpec base = tiny_spec();
  std::string d0 = config_digest(base);
  CHECK(d0.size() == 16);
  CHECK(d0.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(config_digest(base) == d0);

  auto differs = [&](ExperimentSpec s) { return config_digest(s) != d0; };
  ExperimentSpec s = base;
  s.seed = 6;
  CHECK(differs(s));
  s = base;
  s.lr = 0.21;
  CHECK(differs(s));
  s = base;
  s.unlearn.lr = 0.5;
  CHECK(differs(s));
  s = base;
  s.unlearn.keep_rate = 0.31;
  CHECK(differs(s));
  s = base;
  s.model.hidden = {12, 12};
  CHECK(differs(s));
  s = base;
  s.scenario.kind = ScenarioKind::Class;
  CHECK(differs(s));
  s = base;
  s.unlearn.normalize_by_param_count = true;
  CHECK(differs(s));
  // hooks are not part of the digest
  s = base;
  s.pretrain_hook = [](int, const LayeredModel&, double, const CostLedger&) {};
  CHECK(config_digest(s) == d0);
}

TEST_CASE("client scenario wiring: flipped targets, clean remaining") {
  ExperimentSpec spec = tiny_spec();
  spec.scenario.target_clients = {1};
  ScenarioResult r = run_scenario(spec);

  REQUIRE(r.shards.size() == 4);
  REQUIRE(r.remaining.size() == 3);
  for (const auto& sh : r.remaining) CHECK(sh.client_id != 1);
  // the forgotten evaluation set is exactly the flipped target shard
  const ClientShard* target = nullptr;
  for (const auto& sh : r.shards) {
    if (sh.client_id == 1) target = &sh;
  }
  REQUIRE(target != nullptr);
  CHECK(target->is_unlearn_target);
  CHECK(datasets_bitwise_equal(r.forgotten_eval, target->data));
  CHECK(!r.triggered_test.has_value());

  // fused outputs hold the reversibility contract
  CHECK(models_bitwise_equal(r.fused.retained, r.pretrained));
  CHECK(models_bitwise_equal(remove_adapters({r.fused.retained, r.fused.adapters}),
                             r.pretrained));
  CHECK(models_bitwise_equal(r.fused.unlearned,
                             apply_adapters(r.fused.retained, r.fused.adapters)));

  // metrics filled in
  CHECK(r.fused_metrics.config_digest == config_digest(spec));
  CHECK(r.fused_metrics.seed == spec.seed);
  CHECK(r.fused_metrics.bytes_up > 0);
  CHECK(r.fused_metrics.mia.has_value());
  REQUIRE(r.oracle.has_value());
  REQUIRE(r.oracle_metrics.has_value());
  CHECK(r.oracle_metrics->ra >= 0.0);
  CHECK(r.oracle_metrics->ra <= 1.0);
}

TEST_CASE("class scenario wiring: target class absent from remaining shards") {
  ExperimentSpec spec = tiny_spec();
  spec.scenario.kind = ScenarioKind::Class;
  spec.scenario.target_classes = {2};
  ScenarioResult r = run_scenario(spec);

  for (const auto& sh : r.remaining) {
    for (int y : sh.data.labels) CHECK(y != 2);
  }
  for (int y : r.forgotten_eval.labels) CHECK(y == 2);
  CHECK(r.forgotten_eval.size() == 15);  // test_per_class of the target class
  Eigen::Index remaining_total = 0;
  for (const auto& sh : r.remaining) remaining_total += sh.data.size();
  CHECK(remaining_total == 3 * 30);  // three surviving classes of train data
}

TEST_CASE("sample scenario wiring: poisoned rows leave the remaining pool") {
  ExperimentSpec spec = tiny_spec();
  spec.scenario.kind = ScenarioKind::Sample;
  spec.scenario.backdoor_fraction = 0.1;
  spec.scenario.trigger_value = 2.0;
  spec.scenario.backdoor_target_label = 0;
  ScenarioResult r = run_scenario(spec);

  // ceil(0.1 * 120) = 12 poisoned rows
  CHECK(r.forgotten_eval.size() == 12);
  for (int y : r.forgotten_eval.labels) CHECK(y == 0);
  Eigen::Index last = r.forgotten_eval.dim() - 1;
  CHECK((r.forgotten_eval.features.col(last).array() - 2.0).abs().maxCoeff() == 0.0);

  Eigen::Index remaining_total = 0;
  for (const auto& sh : r.remaining) {
    CHECK(sh.attacked_indices.empty());
    remaining_total += sh.data.size();
  }
  CHECK(remaining_total == 120 - 12);
  REQUIRE(r.triggered_test.has_value());
  CHECK(r.triggered_test->size() == r.clean_test.size());
  CHECK(r.fused_metrics.zero_acc.has_value());
  CHECK(r.fused_metrics.precision_zero.has_value());
}

TEST_CASE("runs are deterministic and worker-count independent") {
  ExperimentSpec spec = tiny_spec();
  ScenarioResult a = run_scenario(spec);
  ScenarioResult b = run_scenario(spec);
  CHECK(models_bitwise_equal(a.fused.unlearned, b.fused.unlearned));
  CHECK(a.fused_metrics.ra == b.fused_metrics.ra);
  CHECK(a.fused_metrics.fa == b.fused_metrics.fa);
  CHECK(a.fused_metrics.mia == b.fused_metrics.mia);

  spec.workers = 3;
  ScenarioResult c = run_scenario(spec);
  CHECK(models_bitwise_equal(a.fused.unlearned, c.fused.unlearned));
  CHECK(models_bitwise_equal(*a.oracle, *c.oracle));
  CHECK(a.fused_metrics.bytes_up == c.fused_metrics.bytes_up);
}

TEST_CASE("disabling the oracle skips it") {
  ExperimentSpec spec = tiny_spec();
  spec.eval.retraining_oracle = false;
  spec.eval.mia = false;
  ScenarioResult r = run_scenario(spec);
  CHECK(!r.oracle.has_value());
  CHECK(!r.oracle_metrics.has_value());
  CHECK(!r.fused_metrics.mia.has_value());
}

TEST_CASE("make_eval_sets regenerates exactly the sets a full run uses") {
  for (ScenarioKind kind : {ScenarioKind::Client, ScenarioKind::Class, ScenarioKind::Sample}) {
    ExperimentSpec spec = tiny_spec();
    spec.scenario.kind = kind;
    EvalSets sets = make_eval_sets(spec);
    ScenarioResult r = run_scenario(spec);
    CHECK(datasets_bitwise_equal(sets.clean_test, r.clean_test));
    CHECK(datasets_bitwise_equal(sets.forgotten_eval, r.forgotten_eval));
    CHECK(sets.triggered_test.has_value() == r.triggered_test.has_value());
    if (sets.triggered_test) {
      CHECK(datasets_bitwise_equal(*sets.triggered_test, *r.triggered_test));
    }
  }
}

TEST_CASE("make_probe_batch is a prefix of the clean test set") {
  ExperimentSpec spec = tiny_spec();
  EvalSets sets = make_eval_sets(spec);
  Dataset probe = make_probe_batch(spec, 10);
  CHECK(probe.size() == 10);
  CHECK(std::memcmp(probe.features.data(), sets.clean_test.features.data(),
                    sizeof(double) * (size_t)probe.features.size()) == 0);
  // asking for more rows than exist clamps to the whole set
  Dataset all = make_probe_batch(spec, 100000);
  CHECK(all.size() == sets.clean_test.size());
  CHECK_THROWS_AS(make_probe_batch(spec, 0), DomainError);
}

TEST_CASE("identify-only and retrain-only match the full pipeline") {
  ExperimentSpec spec = tiny_spec();
  ScenarioResult full = run_scenario(spec);
  IdentifyResult ident = run_identify_only(spec);
  CHECK(models_bitwise_equal(ident.pretrained, full.pretrained));
  REQUIRE(ident.layers.ranking.size() == full.layers.ranking.size());
  for (size_t i = 0; i < ident.layers.ranking.size(); ++i) {
    CHECK(ident.layers.ranking[i].layer_index == full.layers.ranking[i].layer_index);
    CHECK(ident.layers.ranking[i].diff == full.layers.ranking[i].diff);
  }
  CHECK(ident.pretrain_cost.train_flops == full.pretrain_cost.train_flops);

  RetrainOnlyResult retrain = run_retraining_only(spec);
  REQUIRE(full.oracle.has_value());
  CHECK(models_bitwise_equal(retrain.model, *full.oracle));
  CHECK(retrain.metrics.ra == full.oracle_metrics->ra);
  CHECK(retrain.metrics.fa == full.oracle_metrics->fa);
}

TEST_CASE("run_relearn continues training and validates rounds") {
  ExperimentSpec spec = tiny_spec();
  ScenarioResult r = run_scenario(spec);
  FedConfig cfg;
  cfg.rounds = 1;
  cfg.local_epochs = 1;
  cfg.lr = 0.2;
  cfg.batch_size = 16;
  double rea = run_relearn(r.fused.unlearned, r.shards, r.forgotten_eval, 1, cfg, Rng(99));
  CHECK(rea >= 0.0);
  CHECK(rea <= 1.0);
  CHECK_THROWS_AS(run_relearn(r.fused.unlearned, r.shards, r.forgotten_eval, 0, cfg, Rng(99)),
                  ConfigError);
}

TEST_CASE("interference probe isolates the unique class from the oracle") {
  InterferenceSpec spec;
  spec.data.classes = 4;
  spec.data.dim = 8;
  spec.data.train_per_class = 40;
  spec.data.test_per_class = 20;
  spec.data.spread = 0.3;
  spec.model.hidden = {16};
  spec.n_clients = 5;
  spec.pretrain_rounds = 6;
  spec.unlearn_rounds = 6;
  spec.local_epochs = 1;
  spec.lr = 0.2;
  spec.batch_size = 16;
  spec.unlearn.keep_rate = 0.3;
  spec.seed = 3;
  InterferenceResult r = run_interference_probe(spec);

  for (const InterferenceMethodResult* m : {&r.fused, &r.naive_finetune, &r.oracle}) {
    CHECK(m->f_acc >= 0.0);
    CHECK(m->f_acc <= 1.0);
    CHECK(m->c_acc >= 0.0);
    CHECK(m->c_acc <= 1.0);
    CHECK(m->r_acc >= 0.0);
    CHECK(m->r_acc <= 1.0);
  }
  // the oracle never saw a single unique-class sample
  CHECK(r.oracle.f_acc <= 0.2);
  // everyone still learns the broadly shared classes
  CHECK(r.oracle.r_acc >= 0.6);
  CHECK(r.fused.r_acc >= 0.6);
}

TEST_CASE("interference probe validates its class layout") {
  InterferenceSpec spec;
  spec.data.classes = 2;
  CHECK_THROWS_AS(run_interference_probe(spec), ConfigError);
  spec.data.classes = 4;
  spec.unique_class = 1;
  spec.overlap_class = 1;
  CHECK_THROWS_AS(run_interference_probe(spec), ConfigError);
  spec.overlap_class = 9;
  CHECK_THROWS_AS(run_interference_probe(spec), ConfigError);
  spec.overlap_class = 0;
  spec.n_clients = 2;
  CHECK_THROWS_AS(run_interference_probe(spec), ConfigError);
}

#include "fused/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "fused/errors.hpp"
#include "fused/serialize.hpp"

namespace fused {

namespace {

struct PreparedData {
  std::vector<ClientShard> shards;      // pretraining population
  std::vector<ClientShard> remaining;   // unlearning participants
  Dataset clean_test;
  Dataset forgotten_eval;               // FA set
  Dataset remaining_eval;               // RA set
  std::optional<Dataset> triggered_test;
  Dataset mia_member;
  Dataset mia_nonmember;
};

Dataset concat_shards(const std::vector<const ClientShard*>& shards) {
  Eigen::Index total = 0;
  for (const ClientShard* s : shards) total += s->data.size();
  if (total == 0) throw DomainError("concat_shards: no samples");
  Dataset out;
  out.features.resize(total, shards.front()->data.dim());
  out.labels.resize(static_cast<size_t>(total));
  out.class_count = shards.front()->data.class_count;
  Eigen::Index at = 0;
  for (const ClientShard* s : shards) {
    for (Eigen::Index i = 0; i < s->data.size(); ++i, ++at) {
      out.features.row(at) = s->data.features.row(i);
      out.labels[static_cast<size_t>(at)] = s->data.labels[static_cast<size_t>(i)];
    }
  }
  return out;
}

std::vector<Eigen::Index> complement_rows(const ClientShard& shard,
                                          const std::vector<Eigen::Index>& drop) {
  std::set<Eigen::Index> dropped(drop.begin(), drop.end());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < shard.data.size(); ++i) {
    if (!dropped.count(i)) keep.push_back(i);
  }
  return keep;
}

void validate(const ExperimentSpec& spec) {
  if (spec.partition.n_clients < 2) {
    throw ConfigError("scenario: need at least 2 clients");
  }
  if (spec.pretrain_rounds < 1) throw ConfigError("scenario: pretrain_rounds must be positive");
  if (spec.unlearn.rounds < 1) throw ConfigError("scenario: unlearning rounds must be positive");
  if (spec.unlearn.probe_epochs < 1) throw ConfigError("scenario: probe_epochs must be positive");
  if (spec.unlearn.keep_rate <= 0.0 || spec.unlearn.keep_rate > 1.0) {
    throw ConfigError("scenario: keep_rate must lie in (0, 1]");
  }
  if (spec.unlearn.lr < 0.0) throw ConfigError("scenario: unlearning lr must be non-negative");
  const int layer_count = static_cast<int>(spec.model.hidden.size()) + 1;
  if (spec.unlearn.top_k < 1 || spec.unlearn.top_k > layer_count) {
    throw ConfigError("scenario: top_k out of range for this model");
  }
  if (spec.scenario.relearn_rounds < 0) {
    throw ConfigError("scenario: relearn_rounds must be non-negative");
  }

  switch (spec.scenario.kind) {
    case ScenarioKind::Client: {
      if (spec.scenario.target_clients.empty()) {
        throw ConfigError("scenario: no target clients given");
      }
      std::set<int> seen;
      for (int id : spec.scenario.target_clients) {
        if (id < 0 || id >= spec.partition.n_clients) {
          throw ConfigError("scenario: target client id out of range");
        }
        if (!seen.insert(id).second) throw ConfigError("scenario: duplicate target client");
      }
      if (static_cast<int>(seen.size()) >= spec.partition.n_clients) {
        throw ConfigError("scenario: cannot unlearn every client");
      }
      break;
    }
    case ScenarioKind::Class: {
      if (spec.scenario.target_classes.empty()) {
        throw ConfigError("scenario: no target classes given");
      }
      std::set<int> seen;
      for (int c : spec.scenario.target_classes) {
        if (c < 0 || c >= spec.data.classes) {
          throw ConfigError("scenario: target class out of range");
        }
        if (!seen.insert(c).second) throw ConfigError("scenario: duplicate target class");
      }
      if (static_cast<int>(seen.size()) >= spec.data.classes) {
        throw ConfigError("scenario: cannot unlearn every class");
      }
      break;
    }
    case ScenarioKind::Sample: {
      if (spec.scenario.backdoor_fraction <= 0.0 || spec.scenario.backdoor_fraction > 1.0) {
        throw ConfigError("scenario: backdoor_fraction must lie in (0, 1]");
      }
      if (spec.scenario.backdoor_target_label < 0 ||
          spec.scenario.backdoor_target_label >= spec.data.classes) {
        throw ConfigError("scenario: backdoor target label out of range");
      }
      break;
    }
  }
}

PreparedData prepare_data(const ExperimentSpec& spec, Rng& root) {
  Dataset full = gen_synthetic(spec.data.classes, spec.data.dim,
                               spec.data.train_per_class + spec.data.test_per_class,
                               spec.data.spread, root.derive("data"));
  auto [train, test] = split_by_class_counts(full, spec.data.train_per_class);

  PreparedData pd;
  pd.clean_test = test;

  switch (spec.scenario.kind) {
    case ScenarioKind::Client: {
      pd.shards = dirichlet_partition(train, spec.partition.n_clients, spec.partition.alpha,
                                      root.derive("partition"));
      std::set<int> targets(spec.scenario.target_clients.begin(),
                            spec.scenario.target_clients.end());
      std::vector<const ClientShard*> forgotten;
      for (auto& shard : pd.shards) {
        if (targets.count(shard.client_id)) {
          shard = apply_label_flip(shard, root.derive("flip", shard.client_id));
          forgotten.push_back(&shard);
        }
      }
      for (const auto& shard : pd.shards) {
        if (!targets.count(shard.client_id)) pd.remaining.push_back(shard);
      }
      pd.forgotten_eval = concat_shards(forgotten);
      pd.remaining_eval = test;
      pd.mia_member = pd.forgotten_eval;
      pd.mia_nonmember = test;
      break;
    }
    case ScenarioKind::Class: {
      pd.shards = dirichlet_partition(train, spec.partition.n_clients, spec.partition.alpha,
                                      root.derive("partition"));
      for (const auto& shard : pd.shards) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < shard.data.size(); ++i) {
          int y = shard.data.labels[static_cast<size_t>(i)];
          bool forgotten_class = false;
          for (int c : spec.scenario.target_classes) forgotten_class |= (c == y);
          if (!forgotten_class) keep.push_back(i);
        }
        if (!keep.empty()) pd.remaining.push_back(filter_shard(shard, keep));
      }
      pd.forgotten_eval = select_by_classes(test, spec.scenario.target_classes, true);
      pd.remaining_eval = select_by_classes(test, spec.scenario.target_classes, false);
      pd.mia_member = select_by_classes(train, spec.scenario.target_classes, true);
      pd.mia_nonmember = pd.forgotten_eval;
      break;
    }
    case ScenarioKind::Sample: {
      BackdoorResult bd =
          apply_backdoor(train, spec.scenario.backdoor_fraction, spec.scenario.trigger_value,
                         spec.scenario.backdoor_target_label, root.derive("backdoor"));
      pd.shards = dirichlet_partition(bd.data, spec.partition.n_clients, spec.partition.alpha,
                                      root.derive("partition"));
      mark_attacked(pd.shards, bd.attacked_indices);
      for (const auto& shard : pd.shards) {
        std::vector<Eigen::Index> keep = complement_rows(shard, shard.attacked_indices);
        if (!keep.empty()) pd.remaining.push_back(filter_shard(shard, keep));
      }

      // The forgotten set is the poisoned rows themselves, poisoned labels
      // included: FA asks how well the model still fits the implant.
      Dataset poisoned;
      poisoned.features.resize(static_cast<Eigen::Index>(bd.attacked_indices.size()),
                               bd.data.dim());
      poisoned.labels.resize(bd.attacked_indices.size());
      poisoned.class_count = bd.data.class_count;
      for (size_t i = 0; i < bd.attacked_indices.size(); ++i) {
        poisoned.features.row(static_cast<Eigen::Index>(i)) =
            bd.data.features.row(bd.attacked_indices[i]);
        poisoned.labels[i] =
            bd.data.labels[static_cast<size_t>(bd.attacked_indices[i])];
      }
      pd.forgotten_eval = poisoned;
      pd.remaining_eval = test;
      pd.triggered_test = apply_trigger(test, spec.scenario.trigger_value);

      pd.mia_member = poisoned;
      Dataset nonmember = apply_trigger(test, spec.scenario.trigger_value);
      for (auto& y : nonmember.labels) y = spec.scenario.backdoor_target_label;
      pd.mia_nonmember = nonmember;
      break;
    }
  }

  if (pd.remaining.empty()) {
    throw ProtocolError("scenario: no clients hold any remaining data");
  }
  return pd;
}

std::vector<int> model_sizes(const ExperimentSpec& spec) {
  std::vector<int> sizes;
  sizes.push_back(spec.data.dim);
  for (int h : spec.model.hidden) sizes.push_back(h);
  sizes.push_back(spec.data.classes);
  return sizes;
}

RunMetrics evaluate_model(const LayeredModel& model, const PreparedData& pd,
                          const ExperimentSpec& spec, Rng relearn_rng) {
  RunMetrics m;
  m.ra = accuracy(model, pd.remaining_eval);
  m.fa = accuracy(model, pd.forgotten_eval);

  if (spec.eval.mia) {
    std::vector<double> member = per_sample_losses(model, pd.mia_member);
    std::vector<double> nonmember = per_sample_losses(model, pd.mia_nonmember);
    m.mia = mia_attack(member, nonmember).balanced_accuracy;
  }

  if (pd.triggered_test) {
    ZeroClassMetrics z = zero_class_metrics(model, pd.clean_test, *pd.triggered_test);
    m.zero_acc = z.zero_acc;
    m.precision_zero = z.precision_zero;
    m.ps_vacuous = z.vacuous;
  }

  if (spec.eval.relearn && spec.scenario.relearn_rounds >= 1) {
    FedConfig cfg;
    cfg.rounds = spec.scenario.relearn_rounds;
    cfg.local_epochs = spec.local_epochs;
    cfg.lr = spec.lr;
    cfg.batch_size = spec.batch_size;
    cfg.workers = spec.workers;
    m.rea = run_relearn(model, pd.shards, pd.forgotten_eval, spec.scenario.relearn_rounds, cfg,
                        relearn_rng);
  }
  return m;
}

std::string spec_text(const ExperimentSpec& spec) {
  std::ostringstream out;
  out << "classes=" << spec.data.classes << "\ndim=" << spec.data.dim
      << "\ntrain_per_class=" << spec.data.train_per_class
      << "\ntest_per_class=" << spec.data.test_per_class
      << "\nspread=" << format_g17(spec.data.spread) << "\nhidden=";
  for (size_t i = 0; i < spec.model.hidden.size(); ++i) {
    if (i) out << '|';
    out << spec.model.hidden[i];
  }
  out << "\ninit_scale=" << format_g17(spec.model.init_scale)
      << "\nn_clients=" << spec.partition.n_clients
      << "\nalpha=" << format_g17(spec.partition.alpha)
      << "\npretrain_rounds=" << spec.pretrain_rounds
      << "\nlocal_epochs=" << spec.local_epochs << "\nlr=" << format_g17(spec.lr)
      << "\nbatch_size=" << spec.batch_size << "\nkind=";
  switch (spec.scenario.kind) {
    case ScenarioKind::Client: out << "client"; break;
    case ScenarioKind::Class: out << "class"; break;
    case ScenarioKind::Sample: out << "sample"; break;
  }
  out << "\ntarget_clients=";
  for (size_t i = 0; i < spec.scenario.target_clients.size(); ++i) {
    if (i) out << '|';
    out << spec.scenario.target_clients[i];
  }
  out << "\ntarget_classes=";
  for (size_t i = 0; i < spec.scenario.target_classes.size(); ++i) {
    if (i) out << '|';
    out << spec.scenario.target_classes[i];
  }
  out << "\nbackdoor_fraction=" << format_g17(spec.scenario.backdoor_fraction)
      << "\ntrigger_value=" << format_g17(spec.scenario.trigger_value)
      << "\nbackdoor_target_label=" << spec.scenario.backdoor_target_label
      << "\nrelearn_rounds=" << spec.scenario.relearn_rounds
      << "\nunlearn_rounds=" << spec.unlearn.rounds
      << "\nprobe_epochs=" << spec.unlearn.probe_epochs << "\ntop_k=" << spec.unlearn.top_k
      << "\nkeep_rate=" << format_g17(spec.unlearn.keep_rate)
      << "\nunlearn_lr=" << format_g17(spec.unlearn.lr)
      << "\nnormalize_by_param_count=" << (spec.unlearn.normalize_by_param_count ? 1 : 0)
      << "\nretraining_oracle=" << (spec.eval.retraining_oracle ? 1 : 0)
      << "\nrelearn=" << (spec.eval.relearn ? 1 : 0) << "\nmia=" << (spec.eval.mia ? 1 : 0)
      << "\nseed=" << spec.seed << '\n';
  return out.str();
}

}  // namespace

std::string config_digest(const ExperimentSpec& spec) {
  const std::string text = spec_text(spec);
  const std::uint64_t h =
      fnv1a(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double run_relearn(const LayeredModel& start, const std::vector<ClientShard>& all_shards,
                   const Dataset& forgotten_eval, int rounds, const FedConfig& cfg, Rng rng) {
  if (rounds < 1) throw ConfigError("run_relearn: rounds must be at least 1");
  FedConfig c = cfg;
  c.rounds = rounds;
  FedRunResult r = run_federated(start, all_shards, c, rng);
  return accuracy(r.model, forgotten_eval);
}

ScenarioResult run_scenario(const ExperimentSpec& spec) {
  validate(spec);
  Rng root(spec.seed);
  PreparedData pd = prepare_data(spec, root);

  ScenarioResult result;
  result.shards = pd.shards;
  result.remaining = pd.remaining;
  result.clean_test = pd.clean_test;
  result.forgotten_eval = pd.forgotten_eval;
  result.triggered_test = pd.triggered_test;

  LayeredModel init = new_mlp(model_sizes(spec), spec.model.init_scale, root.derive("init"));

  FedConfig pre_cfg;
  pre_cfg.rounds = spec.pretrain_rounds;
  pre_cfg.local_epochs = spec.local_epochs;
  pre_cfg.lr = spec.lr;
  pre_cfg.batch_size = spec.batch_size;
  pre_cfg.workers = spec.workers;
  FedRunResult pre =
      run_federated(init, pd.shards, pre_cfg, root.derive("pretrain"), spec.pretrain_hook);
  result.pretrained = pre.model;
  result.pretrain_cost = pre.cost;

  ProbeConfig probe;
  probe.epochs = spec.unlearn.probe_epochs;
  probe.lr = spec.lr;
  probe.batch_size = spec.batch_size;
  probe.top_k = spec.unlearn.top_k;
  probe.normalize_by_param_count = spec.unlearn.normalize_by_param_count;
  result.layers = identify_critical_layers(result.pretrained, pd.shards, probe,
                                           root.derive("identify"), spec.workers,
                                           &result.identify_cost);

  FusedConfig fused_cfg;
  fused_cfg.fed.rounds = spec.unlearn.rounds;
  fused_cfg.fed.local_epochs = spec.local_epochs;
  fused_cfg.fed.lr = spec.unlearn.lr > 0.0 ? spec.unlearn.lr : spec.lr;
  fused_cfg.fed.batch_size = spec.batch_size;
  fused_cfg.fed.workers = spec.workers;
  fused_cfg.keep_rate = spec.unlearn.keep_rate;
  fused_cfg.critical_layers = result.layers.critical;
  fused_cfg.total_clients = spec.partition.n_clients;
  result.fused = run_fused_unlearning(result.pretrained, pd.remaining, fused_cfg,
                                      root.derive("unlearn"), spec.unlearn_hook);

  const std::string digest = config_digest(spec);

  result.fused_metrics =
      evaluate_model(result.fused.unlearned, pd, spec, root.derive("relearn_fused"));
  CostLedger fused_total = result.identify_cost;
  fused_total.merge(result.fused.cost);
  result.fused_metrics.comp_seconds = fused_total.compute_seconds();
  result.fused_metrics.bytes_up = fused_total.bytes_up;
  result.fused_metrics.bytes_down = fused_total.bytes_down;
  result.fused_metrics.storage_units = fused_total.server_storage_units;
  result.fused_metrics.seed = spec.seed;
  result.fused_metrics.config_digest = digest;

  if (spec.eval.retraining_oracle) {
    LayeredModel oracle_init =
        new_mlp(model_sizes(spec), spec.model.init_scale, root.derive("oracle_init"));
    FedConfig oracle_cfg = pre_cfg;
    oracle_cfg.rounds = spec.unlearn.rounds;
    FedRunResult orc =
        run_federated(oracle_init, pd.remaining, oracle_cfg, root.derive("retrain"));
    result.oracle = orc.model;
    result.oracle_cost = orc.cost;

    RunMetrics om = evaluate_model(orc.model, pd, spec, root.derive("relearn_oracle"));
    om.comp_seconds = orc.cost.compute_seconds();
    om.bytes_up = orc.cost.bytes_up;
    om.bytes_down = orc.cost.bytes_down;
    om.storage_units = orc.cost.server_storage_units;
    om.seed = spec.seed;
    om.config_digest = digest;
    result.oracle_metrics = om;
  }
  return result;
}

IdentifyResult run_identify_only(const ExperimentSpec& spec) {
  validate(spec);
  Rng root(spec.seed);
  PreparedData pd = prepare_data(spec, root);

  LayeredModel init = new_mlp(model_sizes(spec), spec.model.init_scale, root.derive("init"));

  FedConfig pre_cfg;
  pre_cfg.rounds = spec.pretrain_rounds;
  pre_cfg.local_epochs = spec.local_epochs;
  pre_cfg.lr = spec.lr;
  pre_cfg.batch_size = spec.batch_size;
  pre_cfg.workers = spec.workers;
  FedRunResult pre =
      run_federated(init, pd.shards, pre_cfg, root.derive("pretrain"), spec.pretrain_hook);

  IdentifyResult result;
  result.pretrained = pre.model;
  result.pretrain_cost = pre.cost;

  ProbeConfig probe;
  probe.epochs = spec.unlearn.probe_epochs;
  probe.lr = spec.lr;
  probe.batch_size = spec.batch_size;
  probe.top_k = spec.unlearn.top_k;
  probe.normalize_by_param_count = spec.unlearn.normalize_by_param_count;
  result.layers = identify_critical_layers(result.pretrained, pd.shards, probe,
                                           root.derive("identify"), spec.workers,
                                           &result.identify_cost);
  return result;
}

RetrainOnlyResult run_retraining_only(const ExperimentSpec& spec) {
  validate(spec);
  Rng root(spec.seed);
  PreparedData pd = prepare_data(spec, root);

  LayeredModel oracle_init =
      new_mlp(model_sizes(spec), spec.model.init_scale, root.derive("oracle_init"));
  FedConfig cfg;
  cfg.rounds = spec.unlearn.rounds;
  cfg.local_epochs = spec.local_epochs;
  cfg.lr = spec.lr;
  cfg.batch_size = spec.batch_size;
  cfg.workers = spec.workers;
  FedRunResult orc = run_federated(oracle_init, pd.remaining, cfg, root.derive("retrain"));

  RetrainOnlyResult result;
  result.model = orc.model;
  result.cost = orc.cost;
  result.metrics = evaluate_model(orc.model, pd, spec, root.derive("relearn_oracle"));
  result.metrics.comp_seconds = orc.cost.compute_seconds();
  result.metrics.bytes_up = orc.cost.bytes_up;
  result.metrics.bytes_down = orc.cost.bytes_down;
  result.metrics.storage_units = orc.cost.server_storage_units;
  result.metrics.seed = spec.seed;
  result.metrics.config_digest = config_digest(spec);
  return result;
}

EvalSets make_eval_sets(const ExperimentSpec& spec) {
  validate(spec);
  Rng root(spec.seed);
  PreparedData pd = prepare_data(spec, root);
  EvalSets sets;
  sets.clean_test = std::move(pd.clean_test);
  sets.forgotten_eval = std::move(pd.forgotten_eval);
  sets.remaining_eval = std::move(pd.remaining_eval);
  sets.triggered_test = std::move(pd.triggered_test);
  return sets;
}

Dataset make_probe_batch(const ExperimentSpec& spec, int max_rows) {
  if (max_rows < 1) throw DomainError("make_probe_batch: max_rows must be positive");
  Rng root(spec.seed);
  Dataset full = gen_synthetic(spec.data.classes, spec.data.dim,
                               spec.data.train_per_class + spec.data.test_per_class,
                               spec.data.spread, root.derive("data"));
  auto [train, test] = split_by_class_counts(full, spec.data.train_per_class);
  (void)train;
  const Eigen::Index rows = std::min<Eigen::Index>(max_rows, test.size());
  Dataset probe;
  probe.features = test.features.topRows(rows);
  probe.labels.assign(test.labels.begin(), test.labels.begin() + rows);
  probe.class_count = test.class_count;
  return probe;
}

InterferenceResult run_interference_probe(const InterferenceSpec& spec) {
  if (spec.data.classes < 3) {
    throw ConfigError("interference probe: need at least 3 classes");
  }
  if (spec.unique_class == spec.overlap_class || spec.unique_class < 0 ||
      spec.overlap_class < 0 || spec.unique_class >= spec.data.classes ||
      spec.overlap_class >= spec.data.classes) {
    throw ConfigError("interference probe: bad unique/overlap class pair");
  }
  if (spec.n_clients < 3) throw ConfigError("interference probe: need at least 3 clients");

  Rng root(spec.seed);
  Dataset full = gen_synthetic(spec.data.classes, spec.data.dim,
                               spec.data.train_per_class + spec.data.test_per_class,
                               spec.data.spread, root.derive("data"));
  auto [train, test] = split_by_class_counts(full, spec.data.train_per_class);

  // Target client: every unique-class row plus 90% of the overlap class.
  std::vector<Eigen::Index> target_rows;
  std::vector<Eigen::Index> overlap_rows;
  std::vector<Eigen::Index> rest_rows;
  for (Eigen::Index i = 0; i < train.size(); ++i) {
    const int y = train.labels[static_cast<size_t>(i)];
    if (y == spec.unique_class) {
      target_rows.push_back(i);
    } else if (y == spec.overlap_class) {
      overlap_rows.push_back(i);
    } else {
      rest_rows.push_back(i);
    }
  }
  Rng overlap_rng = root.derive("overlap_split");
  overlap_rng.shuffle(overlap_rows);
  const size_t ninety = (overlap_rows.size() * 9) / 10;
  for (size_t i = 0; i < overlap_rows.size(); ++i) {
    (i < ninety ? target_rows : rest_rows).push_back(overlap_rows[i]);
  }
  std::sort(target_rows.begin(), target_rows.end());
  std::sort(rest_rows.begin(), rest_rows.end());

  auto rows_to_dataset = [&](const std::vector<Eigen::Index>& rows) {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), train.dim());
    out.labels.resize(rows.size());
    out.class_count = train.class_count;
    for (size_t i = 0; i < rows.size(); ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) = train.features.row(rows[i]);
      out.labels[i] = train.labels[static_cast<size_t>(rows[i])];
    }
    return out;
  };

  std::vector<ClientShard> shards;
  ClientShard target;
  target.client_id = 0;
  target.is_unlearn_target = true;
  target.data = rows_to_dataset(target_rows);
  shards.push_back(std::move(target));

  std::vector<ClientShard> others = dirichlet_partition(
      rows_to_dataset(rest_rows), spec.n_clients - 1, spec.alpha, root.derive("partition"));
  for (auto& shard : others) {
    shard.client_id += 1;
    shard.source_indices.clear();
    shards.push_back(std::move(shard));
  }
  std::vector<ClientShard> remaining(shards.begin() + 1, shards.end());

  std::vector<int> sizes;
  sizes.push_back(spec.data.dim);
  for (int h : spec.model.hidden) sizes.push_back(h);
  sizes.push_back(spec.data.classes);
  LayeredModel init = new_mlp(sizes, spec.model.init_scale, root.derive("init"));

  FedConfig fed;
  fed.rounds = spec.pretrain_rounds;
  fed.local_epochs = spec.local_epochs;
  fed.lr = spec.lr;
  fed.batch_size = spec.batch_size;
  fed.workers = spec.workers;
  FedRunResult pre = run_federated(init, shards, fed, root.derive("pretrain"));

  ProbeConfig probe;
  probe.epochs = spec.unlearn.probe_epochs;
  probe.lr = spec.lr;
  probe.batch_size = spec.batch_size;
  probe.top_k = spec.unlearn.top_k;
  probe.normalize_by_param_count = spec.unlearn.normalize_by_param_count;
  CriticalLayerResult layers = identify_critical_layers(
      pre.model, shards, probe, root.derive("identify"), spec.workers);

  FusedConfig fused_cfg;
  fused_cfg.fed = fed;
  fused_cfg.fed.rounds = spec.unlearn_rounds;
  fused_cfg.fed.lr = spec.unlearn.lr > 0.0 ? spec.unlearn.lr : spec.lr;
  fused_cfg.keep_rate = spec.unlearn.keep_rate;
  fused_cfg.critical_layers = layers.critical;
  fused_cfg.total_clients = spec.n_clients;
  FusedRunResult fused =
      run_fused_unlearning(pre.model, remaining, fused_cfg, root.derive("unlearn"));

  FedConfig post = fed;
  post.rounds = spec.unlearn_rounds;
  post.lr = spec.unlearn.lr > 0.0 ? spec.unlearn.lr : spec.lr;
  FedRunResult naive = run_federated(pre.model, remaining, post, root.derive("naive"));

  LayeredModel oracle_init = new_mlp(sizes, spec.model.init_scale, root.derive("oracle_init"));
  FedRunResult oracle = run_federated(oracle_init, remaining, post, root.derive("retrain"));

  Dataset f_eval = select_by_classes(test, {spec.unique_class}, true);
  Dataset c_eval = select_by_classes(test, {spec.overlap_class}, true);
  Dataset r_eval = select_by_classes(test, {spec.unique_class, spec.overlap_class}, false);

  auto measure = [&](const LayeredModel& m) {
    InterferenceMethodResult r;
    r.f_acc = accuracy(m, f_eval);
    r.c_acc = accuracy(m, c_eval);
    r.r_acc = accuracy(m, r_eval);
    return r;
  };

  InterferenceResult result;
  result.fused = measure(fused.unlearned);
  result.naive_finetune = measure(naive.model);
  result.oracle = measure(oracle.model);
  return result;
}

}  // namespace fused

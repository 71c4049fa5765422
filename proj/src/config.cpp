#include "fused/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fused/errors.hpp"

namespace fused {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) { throw ConfigError("config: " + what); }

void expect_object(const json& j, const std::string& where) {
  if (!j.is_object()) bad(where + " must be an object");
}

// Walks an object's keys against the handled set; anything else is a typo.
class BlockReader {
 public:
  BlockReader(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    expect_object(j_, name_);
  }

  ~BlockReader() = default;

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) bad("unknown key '" + it.key() + "' in " + name_);
    }
  }

  template <typename T>
  void number(const std::string& key, T& out) {
    if (!mark(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) bad(name_ + "." + key + " must be a number");
    out = v.get<T>();
  }

  void boolean(const std::string& key, bool& out) {
    if (!mark(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) bad(name_ + "." + key + " must be a boolean");
    out = v.get<bool>();
  }

  void string(const std::string& key, std::string& out) {
    if (!mark(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) bad(name_ + "." + key + " must be a string");
    out = v.get<std::string>();
  }

  template <typename T>
  void number_list(const std::string& key, std::vector<T>& out) {
    if (!mark(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) bad(name_ + "." + key + " must be an array");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) bad(name_ + "." + key + " must hold numbers");
      out.push_back(e.get<T>());
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) {
    mark(key);
    return j_.at(key);
  }

 private:
  bool mark(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& j_;
  std::string name_;
  mutable std::set<std::string> seen_;
};

void parse_dataset(const json& j, DataSpec& out) {
  BlockReader r(j, "dataset");
  r.number("classes", out.classes);
  r.number("dim", out.dim);
  r.number("train_per_class", out.train_per_class);
  r.number("test_per_class", out.test_per_class);
  r.number("spread", out.spread);
  r.finish();
}

void parse_model(const json& j, ModelSpec& out) {
  BlockReader r(j, "model");
  r.number_list("hidden", out.hidden);
  r.number("init_scale", out.init_scale);
  r.finish();
}

void parse_partition(const json& j, PartitionSpec& out) {
  BlockReader r(j, "partition");
  r.number("n_clients", out.n_clients);
  r.number("alpha", out.alpha);
  r.finish();
}

void parse_federation(const json& j, ExperimentSpec& out) {
  BlockReader r(j, "federation");
  r.number("pretrain_rounds", out.pretrain_rounds);
  r.number("local_epochs", out.local_epochs);
  r.number("lr", out.lr);
  r.number("batch_size", out.batch_size);
  r.finish();
}

void parse_scenario(const json& j, Scenario& out) {
  BlockReader r(j, "scenario");
  std::string kind;
  r.string("kind", kind);
  if (!kind.empty()) {
    if (kind == "client") {
      out.kind = ScenarioKind::Client;
    } else if (kind == "class") {
      out.kind = ScenarioKind::Class;
    } else if (kind == "sample") {
      out.kind = ScenarioKind::Sample;
    } else {
      bad("scenario.kind must be one of client/class/sample");
    }
  }
  r.number_list("target_clients", out.target_clients);
  r.number_list("target_classes", out.target_classes);
  r.number("backdoor_fraction", out.backdoor_fraction);
  r.number("trigger_value", out.trigger_value);
  r.number("backdoor_target_label", out.backdoor_target_label);
  r.number("relearn_rounds", out.relearn_rounds);
  r.finish();
}

void parse_unlearning(const json& j, UnlearnSpec& out) {
  BlockReader r(j, "unlearning");
  r.number("rounds", out.rounds);
  r.number("probe_epochs", out.probe_epochs);
  r.number("top_k", out.top_k);
  r.number("keep_rate", out.keep_rate);
  r.number("lr", out.lr);
  r.boolean("normalize_by_param_count", out.normalize_by_param_count);
  r.finish();
}

void parse_evaluation(const json& j, EvalSpec& out) {
  BlockReader r(j, "evaluation");
  r.boolean("retraining_oracle", out.retraining_oracle);
  r.boolean("relearn", out.relearn);
  r.boolean("mia", out.mia);
  r.finish();
}

void parse_theory(const json& j, TheorySpec& out) {
  BlockReader r(j, "theory");
  r.number("eta", out.eta);
  r.number("dim", out.dim);
  r.number("trials", out.trials);
  r.number_list("keep_rates", out.keep_rates);
  r.finish();
}

void parse_storage(const json& j, StorageSpec& out) {
  BlockReader r(j, "storage");
  r.number_list("clients", out.clients);
  r.number_list("rounds", out.rounds);
  r.number("model_units", out.model_units);
  r.number("adapter_units", out.adapter_units);
  r.finish();
}

}  // namespace

AppConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    bad(std::string("not valid JSON: ") + e.what());
  }
  expect_object(root, "top level");

  AppConfig cfg;
  BlockReader r(root, "top level");
  r.number("seed", cfg.experiment.seed);
  r.number("workers", cfg.experiment.workers);
  if (r.has("dataset")) parse_dataset(r.raw("dataset"), cfg.experiment.data);
  if (r.has("model")) parse_model(r.raw("model"), cfg.experiment.model);
  if (r.has("partition")) parse_partition(r.raw("partition"), cfg.experiment.partition);
  if (r.has("federation")) parse_federation(r.raw("federation"), cfg.experiment);
  if (r.has("scenario")) parse_scenario(r.raw("scenario"), cfg.experiment.scenario);
  if (r.has("unlearning")) parse_unlearning(r.raw("unlearning"), cfg.experiment.unlearn);
  if (r.has("evaluation")) parse_evaluation(r.raw("evaluation"), cfg.experiment.eval);
  if (r.has("theory")) parse_theory(r.raw("theory"), cfg.theory);
  if (r.has("storage")) parse_storage(r.raw("storage"), cfg.storage);
  r.finish();
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

}  // namespace fused

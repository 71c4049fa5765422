// Command-line front end: identify / unlearn / retrain / restore /
// theory-check / storage-report, all driven by one JSON config and one seed.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fused/adapter.hpp"
#include "fused/config.hpp"
#include "fused/critical_layers.hpp"
#include "fused/errors.hpp"
#include "fused/fedengine.hpp"
#include "fused/metrics.hpp"
#include "fused/model.hpp"
#include "fused/rng.hpp"
#include "fused/scenario.hpp"
#include "fused/serialize.hpp"
#include "fused/theory.hpp"

namespace fs = std::filesystem;
using namespace fused;

namespace {

// Removes every tracked output unless commit() was reached, so a failed run
// never leaves a partial results directory behind.
struct OutputGuard {
  std::vector<fs::path> tracked;
  bool committed = false;

  void track(const fs::path& p) { tracked.push_back(p); }
  void commit() { committed = true; }

  ~OutputGuard() {
    if (committed) return;
    for (const auto& p : tracked) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
};

void write_report(const Report& report, const fs::path& csv_path, OutputGuard& guard) {
  guard.track(csv_path);
  if (!report.meta().empty()) guard.track(fs::path(csv_path.string() + ".meta"));
  report.write(csv_path.string());
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += '|';
    s += std::to_string(v[i]);
  }
  return s;
}

Report ranking_report(const CriticalLayerResult& layers, std::uint64_t seed,
                      const std::string& digest) {
  Report report({"layer_index", "diff", "rank"});
  for (std::size_t i = 0; i < layers.ranking.size(); ++i) {
    report.add_row({static_cast<double>(layers.ranking[i].layer_index), layers.ranking[i].diff,
                    static_cast<double>(i + 1)});
  }
  report.set_meta("schema", "layer-ranking-v1");
  report.set_meta("critical", join_ints(layers.critical));
  report.set_meta("seed", std::to_string(seed));
  report.set_meta("config_digest", digest);
  return report;
}

// Per-round log line; timestamps and wall-clock never appear, so logs are as
// reproducible as the reports.
RoundHook stream_hook(const char* phase, const EvalSets* sets) {
  return [phase, sets](int round, const LayeredModel& current, double mean_loss,
                       const CostLedger& cost) {
    std::printf("phase=%s round=%d loss=%.6f", phase, round, mean_loss);
    if (sets) {
      std::printf(" ra=%.4f fa=%.4f", accuracy(current, sets->remaining_eval),
                  accuracy(current, sets->forgotten_eval));
    }
    std::printf(" bytes_up=%llu bytes_down=%llu comp_seconds=%.3f\n",
                static_cast<unsigned long long>(cost.bytes_up),
                static_cast<unsigned long long>(cost.bytes_down), cost.compute_seconds());
    std::fflush(stdout);
  };
}

void print_metrics_line(const char* method, const RunMetrics& m) {
  std::printf("%s ra=%.4f fa=%.4f", method, m.ra, m.fa);
  if (m.rea) std::printf(" rea=%.4f", *m.rea);
  if (m.mia) std::printf(" mia=%.4f", *m.mia);
  if (m.zero_acc) std::printf(" zero_acc=%.4f", *m.zero_acc);
  if (m.precision_zero) std::printf(" precision_zero=%.4f", *m.precision_zero);
  std::printf(" comp_seconds=%.3f bytes_up=%llu bytes_down=%llu storage_units=%llu\n",
              m.comp_seconds, static_cast<unsigned long long>(m.bytes_up),
              static_cast<unsigned long long>(m.bytes_down),
              static_cast<unsigned long long>(m.storage_units));
}

int cmd_identify(const AppConfig& cfg, const fs::path& out) {
  ExperimentSpec spec = cfg.experiment;
  spec.pretrain_hook = stream_hook("pretrain", nullptr);
  IdentifyResult result = run_identify_only(spec);

  OutputGuard guard;
  Report report = ranking_report(result.layers, spec.seed, config_digest(spec));
  write_report(report, out / "ranking.csv", guard);
  std::fputs(report.csv_text().c_str(), stdout);
  std::printf("critical=%s\n", report.meta().at("critical").c_str());
  guard.commit();
  return 0;
}

int cmd_unlearn(const AppConfig& cfg, const fs::path& out) {
  ExperimentSpec spec = cfg.experiment;
  EvalSets sets = make_eval_sets(spec);
  spec.pretrain_hook = stream_hook("pretrain", &sets);
  spec.unlearn_hook = stream_hook("unlearn", &sets);
  ScenarioResult result = run_scenario(spec);

  OutputGuard guard;
  Report ranking = ranking_report(result.layers, spec.seed, config_digest(spec));
  write_report(ranking, out / "ranking.csv", guard);

  Report report = run_metrics_report(result.fused_metrics);
  report.set_meta("method", "fused");
  write_report(report, out / "report.csv", guard);
  print_metrics_line("fused", result.fused_metrics);

  if (result.oracle_metrics) {
    Report oracle = run_metrics_report(*result.oracle_metrics);
    oracle.set_meta("method", "retraining");
    write_report(oracle, out / "oracle_report.csv", guard);
    print_metrics_line("retraining", *result.oracle_metrics);
  }

  guard.track(out / "retained.bin");
  save_model(result.fused.retained, (out / "retained.bin").string());
  guard.track(out / "adapters.bin");
  save_adapters(result.fused.adapters, (out / "adapters.bin").string());
  guard.track(out / "unlearned.bin");
  save_model(result.fused.unlearned, (out / "unlearned.bin").string());

  guard.commit();
  return 0;
}

int cmd_retrain(const AppConfig& cfg, const fs::path& out) {
  RetrainOnlyResult result = run_retraining_only(cfg.experiment);

  OutputGuard guard;
  Report report = run_metrics_report(result.metrics);
  report.set_meta("method", "retraining");
  write_report(report, out / "retrain_report.csv", guard);
  guard.track(out / "retrained.bin");
  save_model(result.model, (out / "retrained.bin").string());
  print_metrics_line("retraining", result.metrics);
  guard.commit();
  return 0;
}

struct LogitCompare {
  bool equal = true;
  double max_abs_diff = 0.0;
};

// Bitwise logit comparison; max_abs_diff is only for the failure report.
LogitCompare compare_logits(const Matrix& a, const Matrix& b) {
  LogitCompare cmp;
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("restore: probe logit shapes differ");
  }
  cmp.equal = std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
  cmp.max_abs_diff = (a - b).cwiseAbs().maxCoeff();
  return cmp;
}

int cmd_restore(const AppConfig& cfg, const fs::path& out, const std::string& retained_path,
                const std::string& adapters_path, const std::string& unlearned_path) {
  const std::string retained_file =
      retained_path.empty() ? (out / "retained.bin").string() : retained_path;
  const std::string adapters_file =
      adapters_path.empty() ? (out / "adapters.bin").string() : adapters_path;
  const std::string unlearned_file =
      unlearned_path.empty() ? (out / "unlearned.bin").string() : unlearned_path;

  LayeredModel retained = load_model(retained_file);
  AdapterSet adapters = load_adapters(adapters_file);
  LayeredModel unlearned = load_model(unlearned_file);

  Dataset probe = make_probe_batch(cfg.experiment, 256);

  // Roll back by dropping the deltas; the retained model is returned verbatim.
  MergedContext ctx{retained, adapters};
  LayeredModel restored = remove_adapters(ctx);

  LogitCompare restored_check = compare_logits(forward(restored, probe.features),
                                               forward(retained, probe.features));
  // Cross-check the stored artifacts against each other: re-merging the
  // retained model with the deltas must reproduce the unlearned checkpoint.
  // A tampered retained model (or mismatched adapter set) fails here.
  LogitCompare merged_check = compare_logits(forward(apply_adapters(retained, adapters), probe.features),
                                             forward(unlearned, probe.features));

  OutputGuard guard;
  Report report({"check", "pass", "max_abs_diff"});
  report.add_row({0.0, restored_check.equal ? 1.0 : 0.0, restored_check.max_abs_diff});
  report.add_row({1.0, merged_check.equal ? 1.0 : 0.0, merged_check.max_abs_diff});
  report.set_meta("schema", "restore-report-v1");
  report.set_meta("check_0", "restored_vs_retained");
  report.set_meta("check_1", "merged_vs_unlearned");
  report.set_meta("probe_rows", std::to_string(probe.size()));
  report.set_meta("seed", std::to_string(cfg.experiment.seed));
  write_report(report, out / "restore_report.csv", guard);

  std::printf("restored_vs_retained pass=%d max_abs_diff=%s\n", restored_check.equal ? 1 : 0,
              format_g17(restored_check.max_abs_diff).c_str());
  std::printf("merged_vs_unlearned pass=%d max_abs_diff=%s\n", merged_check.equal ? 1 : 0,
              format_g17(merged_check.max_abs_diff).c_str());

  if (!restored_check.equal || !merged_check.equal) {
    // The failure report is the product here; keep it.
    guard.commit();
    const double worst = std::max(restored_check.max_abs_diff, merged_check.max_abs_diff);
    throw IntegrityError("restore verification failed, max_abs_diff=" + format_g17(worst));
  }

  guard.track(out / "restored.bin");
  save_model(restored, (out / "restored.bin").string());
  std::printf("restore ok\n");
  guard.commit();
  return 0;
}

int cmd_theory_check(const AppConfig& cfg, const fs::path& out) {
  const TheorySpec& th = cfg.theory;
  if (th.dim < 1) throw ConfigError("theory.dim must be positive");
  if (th.keep_rates.empty()) throw ConfigError("theory.keep_rates must be non-empty");

  Rng root(cfg.experiment.seed);
  TheoryProbe probe;
  probe.eta = th.eta;
  probe.theta1 = Vector::Zero(th.dim);
  probe.grad_t1 = Vector::Zero(th.dim);
  probe.grad_t2 = Vector::Zero(th.dim);
  Rng g1 = root.derive("theory_g1");
  Rng g2 = root.derive("theory_g2");
  for (int i = 0; i < th.dim; ++i) {
    probe.grad_t1(i) = g1.normal();
    probe.grad_t2(i) = g2.normal();
  }

  Report report({"keep_rate", "phi", "predicted", "empirical", "z_score"});
  std::printf("%10s %10s %14s %14s %10s\n", "keep_rate", "phi", "predicted", "empirical",
              "z_score");
  const double phi = gradient_cosine(probe);
  for (std::size_t i = 0; i < th.keep_rates.size(); ++i) {
    probe.keep_rate = th.keep_rates[i];
    MaskedCheckResult res =
        masked_expectation_check(probe, th.trials, root.derive("theory_trials", i));
    report.add_row({probe.keep_rate, phi, res.predicted, res.empirical_mean, res.z_score});
    std::printf("%10.3f %10.4f %14.6e %14.6e %10.3f\n", probe.keep_rate, phi, res.predicted,
                res.empirical_mean, res.z_score);
  }
  report.set_meta("schema", "theory-check-v1");
  report.set_meta("seed", std::to_string(cfg.experiment.seed));
  report.set_meta("eta", th.eta);
  report.set_meta("dim", std::to_string(th.dim));
  report.set_meta("trials", std::to_string(th.trials));

  OutputGuard guard;
  write_report(report, out / "theory.csv", guard);
  guard.commit();
  return 0;
}

int cmd_storage_report(const AppConfig& cfg, const fs::path& out) {
  const StorageSpec& st = cfg.storage;
  if (st.clients.empty() || st.rounds.empty()) {
    throw ConfigError("storage.clients and storage.rounds must be non-empty");
  }
  for (int n : st.clients) {
    if (n < 1) throw ConfigError("storage.clients entries must be positive");
  }
  for (int r : st.rounds) {
    if (r < 1) throw ConfigError("storage.rounds entries must be positive");
  }

  std::uint64_t model_units = st.model_units;
  std::uint64_t adapter_units = st.adapter_units;
  if (model_units == 0 || adapter_units == 0) {
    const ExperimentSpec& spec = cfg.experiment;
    std::vector<int> sizes;
    sizes.push_back(spec.data.dim);
    sizes.insert(sizes.end(), spec.model.hidden.begin(), spec.model.hidden.end());
    sizes.push_back(spec.data.classes);
    Rng root(spec.seed);
    LayeredModel model = new_mlp(sizes, spec.model.init_scale, root.derive("storage_model"));
    if (model_units == 0) model_units = static_cast<std::uint64_t>(model.param_count());
    if (adapter_units == 0) {
      const int layers = static_cast<int>(sizes.size()) - 1;
      const int top_k = std::min(spec.unlearn.top_k, layers);
      std::vector<int> deepest;
      for (int l = layers - top_k + 1; l <= layers; ++l) deepest.push_back(l);
      AdapterSet mask =
          make_adapter_set(model, deepest, spec.unlearn.keep_rate, root.derive("storage_mask"));
      adapter_units = static_cast<std::uint64_t>(adapter_param_count(mask));
    }
  }

  Report report({"clients", "rounds", "history_replay_units", "fused_units"});
  std::printf("%8s %8s %22s %14s\n", "clients", "rounds", "history_replay_units", "fused_units");
  for (int n : st.clients) {
    for (int r : st.rounds) {
      StorageModel sm = storage_model(model_units, adapter_units, n, r);
      report.add_row({static_cast<double>(n), static_cast<double>(r),
                      static_cast<double>(sm.history_replay_units),
                      static_cast<double>(sm.fused_units)});
      std::printf("%8d %8d %22llu %14llu\n", n, r,
                  static_cast<unsigned long long>(sm.history_replay_units),
                  static_cast<unsigned long long>(sm.fused_units));
    }
  }
  report.set_meta("schema", "storage-report-v1");
  report.set_meta("model_units", std::to_string(model_units));
  report.set_meta("adapter_units", std::to_string(adapter_units));
  report.set_meta("seed", std::to_string(cfg.experiment.seed));

  OutputGuard guard;
  write_report(report, out / "storage.csv", guard);
  guard.commit();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reversible federated unlearning sandbox"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  auto* workers_opt = app.add_option("--workers", workers, "Override the worker count");
  app.add_option("--out", out_dir, "Output directory (created if missing)");

  auto* identify = app.add_subcommand("identify", "Pretrain and rank layers by drift");
  auto* unlearn = app.add_subcommand("unlearn", "Full pipeline: pretrain, identify, unlearn, evaluate");
  auto* retrain = app.add_subcommand("retrain", "Retraining oracle only");
  auto* restore = app.add_subcommand("restore", "Verify checkpoints and roll back the unlearning");
  auto* theory = app.add_subcommand("theory-check", "Monte-Carlo check of the masked-update expectation");
  auto* storage = app.add_subcommand("storage-report", "Rollback storage cost table");

  std::string retained_path;
  std::string adapters_path;
  std::string unlearned_path;
  restore->add_option("--retained", retained_path, "Retained model checkpoint (default OUT/retained.bin)");
  restore->add_option("--adapters", adapters_path, "Adapter checkpoint (default OUT/adapters.bin)");
  restore->add_option("--unlearned", unlearned_path, "Unlearned model checkpoint (default OUT/unlearned.bin)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    AppConfig cfg = config_path.empty() ? AppConfig{} : load_config(config_path);
    if (seed_opt->count() > 0) cfg.experiment.seed = seed;
    if (workers_opt->count() > 0) {
      if (workers < 1) throw ConfigError("--workers must be at least 1");
      cfg.experiment.workers = workers;
    }

    fs::path out(out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

    if (*identify) return cmd_identify(cfg, out);
    if (*unlearn) return cmd_unlearn(cfg, out);
    if (*retrain) return cmd_retrain(cfg, out);
    if (*restore) return cmd_restore(cfg, out, retained_path, adapters_path, unlearned_path);
    if (*theory) return cmd_theory_check(cfg, out);
    if (*storage) return cmd_storage_report(cfg, out);
    std::fprintf(stderr, "error: no subcommand\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 6;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

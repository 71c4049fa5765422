#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fused/data.hpp"
#include "fused/model.hpp"

namespace fused {

// Argmax class per row; ties go to the lowest class index.
std::vector<int> predict(const LayeredModel& model, const Matrix& x);

// Fraction of correctly classified samples.
double accuracy(const LayeredModel& model, const Dataset& ds);

// Cross-entropy loss of each sample on its own (not batch-averaged).
std::vector<double> per_sample_losses(const LayeredModel& model, const Dataset& ds);

struct MiaResult {
  double balanced_accuracy = 0.0;  // best achievable over all thresholds
  double threshold = 0.0;          // a loss value achieving it
};

// Loss-threshold membership inference: predict "member" when the sample's
// loss is at most the threshold, scored by balanced accuracy (mean of member
// and non-member recall), maximized over every candidate threshold.
MiaResult mia_attack(const std::vector<double>& member_losses,
                     const std::vector<double>& nonmember_losses);

struct AttackSuccess {
  double rate = 0.0;
  bool vacuous = false;  // no eligible samples; rate reported as 1.0
};

// Fraction of samples classified as target_label, counting only samples whose
// true label differs from it (the rest would succeed trivially).
AttackSuccess attack_success(const LayeredModel& model, const Dataset& triggered,
                             int target_label);

struct ZeroClassMetrics {
  double zero_acc = 0.0;        // accuracy on true-class-0 clean samples
  double precision_zero = 0.0;  // precision of class-0 predictions
  bool vacuous = false;         // model never predicted 0; precision is 1.0
};

// Backdoor evaluation pair: accuracy restricted to clean class-0 samples, and
// the precision of class-0 predictions over clean and triggered samples
// together (a backdoored model drags precision down by calling triggered
// non-zeros "0"). A model that never predicts 0 has no false positives, so
// precision is reported as 1.0 with the vacuous flag set.
ZeroClassMetrics zero_class_metrics(const LayeredModel& model, const Dataset& clean_test,
                                    const Dataset& triggered_test);

// Column-schema table with a string metadata sidecar. All numeric output is
// printed with %.17g so equal runs produce byte-identical files.
class Report {
 public:
  Report() = default;
  explicit Report(std::vector<std::string> columns);

  void add_row(const std::vector<double>& values);
  void set_meta(const std::string& key, const std::string& value);
  void set_meta(const std::string& key, double value);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  const std::map<std::string, std::string>& meta() const { return meta_; }

  std::string csv_text() const;
  std::string meta_text() const;  // sorted "key=value" lines

  // Writes csv_path and, when meta entries exist, csv_path + ".meta".
  void write(const std::string& csv_path) const;

  static Report from_csv_text(const std::string& text);
  static Report read(const std::string& csv_path);

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<double>> rows_;
  std::map<std::string, std::string> meta_;
};

std::string format_g17(double v);

// One experiment's metric record. Optional entries are only present when the
// scenario measures them; every accuracy-type field must lie in [0, 1].
struct RunMetrics {
  double ra = 0.0;
  double fa = 0.0;
  std::optional<double> rea;
  std::optional<double> mia;
  std::optional<double> zero_acc;
  std::optional<double> precision_zero;
  bool ps_vacuous = false;
  double comp_seconds = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t storage_units = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
};

// One-row table with seed/digest/flags in the metadata sidecar. Throws on
// out-of-range accuracies.
Report run_metrics_report(const RunMetrics& m);

// Inverse of run_metrics_report; round-trips losslessly.
RunMetrics run_metrics_from_report(const Report& report);

}  // namespace fused

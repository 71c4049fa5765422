#include "fused/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "fused/errors.hpp"

namespace fused {

std::vector<int> predict(const LayeredModel& model, const Matrix& x) {
  Matrix logits = forward(model, x);
  std::vector<int> out(static_cast<size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = static_cast<int>(j);
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

double accuracy(const LayeredModel& model, const Dataset& ds) {
  if (ds.size() == 0) throw DomainError("accuracy: empty dataset");
  std::vector<int> pred = predict(model, ds.features);
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    if (pred[static_cast<size_t>(i)] == ds.labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::vector<double> per_sample_losses(const LayeredModel& model, const Dataset& ds) {
  Matrix logits = forward(model, ds.features);
  std::vector<double> losses(static_cast<size_t>(ds.size()));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const int y = ds.labels[static_cast<size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw DomainError("per_sample_losses: label out of range");
    double m = logits.row(i).maxCoeff();
    double lse = std::log((logits.row(i).array() - m).exp().sum()) + m;
    losses[static_cast<size_t>(i)] = lse - logits(i, y);
  }
  return losses;
}

MiaResult mia_attack(const std::vector<double>& member_losses,
                     const std::vector<double>& nonmember_losses) {
  if (member_losses.empty() || nonmember_losses.empty()) {
    throw DomainError("mia_attack: both loss sets must be non-empty");
  }

  // Sweep thresholds at every observed loss. Sorting members and non-members
  // separately lets each candidate be scored with two binary searches.
  std::vector<double> mem = member_losses;
  std::vector<double> non = nonmember_losses;
  std::sort(mem.begin(), mem.end());
  std::sort(non.begin(), non.end());

  std::vector<double> candidates;
  candidates.reserve(mem.size() + non.size() + 1);
  candidates.insert(candidates.end(), mem.begin(), mem.end());
  candidates.insert(candidates.end(), non.begin(), non.end());
  candidates.push_back(-std::numeric_limits<double>::infinity());  // "predict nobody"
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  MiaResult best;
  best.balanced_accuracy = -1.0;
  for (double tau : candidates) {
    auto members_in = static_cast<double>(
        std::upper_bound(mem.begin(), mem.end(), tau) - mem.begin());
    auto nonmembers_in = static_cast<double>(
        std::upper_bound(non.begin(), non.end(), tau) - non.begin());
    double tpr = members_in / static_cast<double>(mem.size());
    double tnr = 1.0 - nonmembers_in / static_cast<double>(non.size());
    double ba = 0.5 * (tpr + tnr);
    if (ba > best.balanced_accuracy) {
      best.balanced_accuracy = ba;
      best.threshold = tau;
    }
  }
  return best;
}

AttackSuccess attack_success(const LayeredModel& model, const Dataset& triggered,
                             int target_label) {
  if (target_label < 0 || target_label >= triggered.class_count) {
    throw DomainError("attack_success: target_label out of range");
  }
  std::vector<int> pred = predict(model, triggered.features);
  Eigen::Index eligible = 0;
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < triggered.size(); ++i) {
    if (triggered.labels[static_cast<size_t>(i)] == target_label) continue;
    ++eligible;
    if (pred[static_cast<size_t>(i)] == target_label) ++hits;
  }
  AttackSuccess out;
  if (eligible == 0) {
    out.rate = 1.0;
    out.vacuous = true;
  } else {
    out.rate = static_cast<double>(hits) / static_cast<double>(eligible);
  }
  return out;
}

ZeroClassMetrics zero_class_metrics(const LayeredModel& model, const Dataset& clean_test,
                                    const Dataset& triggered_test) {
  bool has_zero = false;
  for (int y : clean_test.labels) has_zero = has_zero || (y == 0);
  if (!has_zero) throw DomainError("zero_class_metrics: clean test has no class-0 samples");

  ZeroClassMetrics out;

  std::vector<int> clean_pred = predict(model, clean_test.features);
  Eigen::Index zero_total = 0;
  Eigen::Index zero_correct = 0;
  for (Eigen::Index i = 0; i < clean_test.size(); ++i) {
    if (clean_test.labels[static_cast<size_t>(i)] != 0) continue;
    ++zero_total;
    if (clean_pred[static_cast<size_t>(i)] == 0) ++zero_correct;
  }
  out.zero_acc = static_cast<double>(zero_correct) / static_cast<double>(zero_total);

  Eigen::Index predicted_zero = 0;
  Eigen::Index true_positive = 0;
  auto tally = [&](const Dataset& ds, const std::vector<int>& pred) {
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      if (pred[static_cast<size_t>(i)] != 0) continue;
      ++predicted_zero;
      if (ds.labels[static_cast<size_t>(i)] == 0) ++true_positive;
    }
  };
  tally(clean_test, clean_pred);
  tally(triggered_test, predict(model, triggered_test.features));

  if (predicted_zero == 0) {
    out.precision_zero = 1.0;
    out.vacuous = true;
  } else {
    out.precision_zero = static_cast<double>(true_positive) / static_cast<double>(predicted_zero);
  }
  return out;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Report::Report(std::vector<std::string> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) throw DomainError("Report: need at least one column");
  for (const auto& c : columns_) {
    if (c.empty() || c.find(',') != std::string::npos || c.find('\n') != std::string::npos) {
      throw DomainError("Report: bad column name");
    }
  }
}

void Report::add_row(const std::vector<double>& values) {
  if (values.size() != columns_.size()) {
    throw DimensionError("Report::add_row: value count != column count");
  }
  rows_.push_back(values);
}

void Report::set_meta(const std::string& key, const std::string& value) {
  if (key.empty() || key.find('=') != std::string::npos || key.find('\n') != std::string::npos) {
    throw DomainError("Report::set_meta: bad key");
  }
  if (value.find('\n') != std::string::npos) {
    throw DomainError("Report::set_meta: value must be single-line");
  }
  meta_[key] = value;
}

void Report::set_meta(const std::string& key, double value) { set_meta(key, format_g17(value)); }

std::string Report::csv_text() const {
  std::string out;
  for (size_t j = 0; j < columns_.size(); ++j) {
    if (j) out += ',';
    out += columns_[j];
  }
  out += '\n';
  for (const auto& row : rows_) {
    for (size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += format_g17(row[j]);
    }
    out += '\n';
  }
  return out;
}

std::string Report::meta_text() const {
  std::string out;
  for (const auto& [k, v] : meta_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

void Report::write(const std::string& csv_path) const {
  {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw IoError("Report::write: cannot open " + csv_path);
    out << csv_text();
    if (!out) throw IoError("Report::write: write failed for " + csv_path);
  }
  if (!meta_.empty()) {
    const std::string meta_path = csv_path + ".meta";
    std::ofstream out(meta_path, std::ios::trunc);
    if (!out) throw IoError("Report::write: cannot open " + meta_path);
    out << meta_text();
    if (!out) throw IoError("Report::write: write failed for " + meta_path);
  }
}

Report Report::from_csv_text(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw IoError("Report::from_csv_text: empty input");

  std::vector<std::string> columns;
  std::stringstream hs(header);
  std::string cell;
  while (std::getline(hs, cell, ',')) columns.push_back(cell);

  Report report(std::move(columns));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream rs(line);
    while (std::getline(rs, cell, ',')) row.push_back(std::stod(cell));
    report.add_row(row);
  }
  return report;
}

Report Report::read(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("Report::read: cannot open " + csv_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_csv_text(buffer.str());
}

namespace {

void check_unit_interval(const char* name, double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw DomainError(std::string("run metrics: ") + name + " outside [0, 1]");
  }
}

}  // namespace

Report run_metrics_report(const RunMetrics& m) {
  check_unit_interval("ra", m.ra);
  check_unit_interval("fa", m.fa);
  if (m.rea) check_unit_interval("rea", *m.rea);
  if (m.mia) check_unit_interval("mia", *m.mia);
  if (m.zero_acc) check_unit_interval("zero_acc", *m.zero_acc);
  if (m.precision_zero) check_unit_interval("precision_zero", *m.precision_zero);

  std::vector<std::string> columns = {"ra", "fa"};
  std::vector<double> row = {m.ra, m.fa};
  auto push = [&](const char* name, const std::optional<double>& v) {
    if (v) {
      columns.emplace_back(name);
      row.push_back(*v);
    }
  };
  push("rea", m.rea);
  push("mia", m.mia);
  push("zero_acc", m.zero_acc);
  push("precision_zero", m.precision_zero);
  columns.emplace_back("comp_seconds");
  row.push_back(m.comp_seconds);
  columns.emplace_back("bytes_up");
  row.push_back(static_cast<double>(m.bytes_up));
  columns.emplace_back("bytes_down");
  row.push_back(static_cast<double>(m.bytes_down));
  columns.emplace_back("storage_units");
  row.push_back(static_cast<double>(m.storage_units));

  Report report(std::move(columns));
  report.add_row(row);
  report.set_meta("schema", "run-metrics-v1");
  report.set_meta("seed", std::to_string(m.seed));
  report.set_meta("config_digest", m.config_digest);
  if (m.precision_zero) report.set_meta("ps_vacuous", m.ps_vacuous ? "1" : "0");
  return report;
}

RunMetrics run_metrics_from_report(const Report& report) {
  if (report.rows().size() != 1) throw IntegrityError("run metrics report: need exactly one row");
  const auto& row = report.rows().front();

  RunMetrics m;
  bool saw_ra = false;
  bool saw_fa = false;
  for (size_t j = 0; j < report.columns().size(); ++j) {
    const std::string& c = report.columns()[j];
    const double v = row[j];
    if (c == "ra") {
      m.ra = v;
      saw_ra = true;
    } else if (c == "fa") {
      m.fa = v;
      saw_fa = true;
    } else if (c == "rea") {
      m.rea = v;
    } else if (c == "mia") {
      m.mia = v;
    } else if (c == "zero_acc") {
      m.zero_acc = v;
    } else if (c == "precision_zero") {
      m.precision_zero = v;
    } else if (c == "comp_seconds") {
      m.comp_seconds = v;
    } else if (c == "bytes_up") {
      m.bytes_up = static_cast<std::uint64_t>(v);
    } else if (c == "bytes_down") {
      m.bytes_down = static_cast<std::uint64_t>(v);
    } else if (c == "storage_units") {
      m.storage_units = static_cast<std::uint64_t>(v);
    } else {
      throw IntegrityError("run metrics report: unknown column " + c);
    }
  }
  if (!saw_ra || !saw_fa) throw IntegrityError("run metrics report: missing ra/fa columns");

  auto meta = report.meta();
  if (auto it = meta.find("seed"); it != meta.end()) {
    m.seed = static_cast<std::uint64_t>(std::stoull(it->second));
  }
  if (auto it = meta.find("config_digest"); it != meta.end()) m.config_digest = it->second;
  if (auto it = meta.find("ps_vacuous"); it != meta.end()) m.ps_vacuous = (it->second == "1");
  return m;
}

}  // namespace fused

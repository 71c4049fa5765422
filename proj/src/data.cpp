#include "fused/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fused/errors.hpp"

namespace fused {

namespace {

void check_dataset(const Dataset& ds, const char* where) {
  if (ds.features.rows() != static_cast<Eigen::Index>(ds.labels.size())) {
    throw DimensionError(std::string(where) + ": feature rows != label count");
  }
  if (ds.class_count <= 0) {
    throw DomainError(std::string(where) + ": class_count must be positive");
  }
  for (int y : ds.labels) {
    if (y < 0 || y >= ds.class_count) {
      throw DomainError(std::string(where) + ": label out of range");
    }
  }
}

}  // namespace

Dataset gen_synthetic(int classes, int dim, int per_class, double spread, Rng rng) {
  if (classes < 2) throw DomainError("gen_synthetic: need at least 2 classes");
  if (dim < 1) throw DomainError("gen_synthetic: dim must be positive");
  if (per_class < 1) throw DomainError("gen_synthetic: per_class must be positive");
  if (spread < 0.0) throw DomainError("gen_synthetic: spread must be non-negative");

  // Class means: random directions on the unit sphere. Redraw in the
  // (measure-zero) case of a vanishing vector.
  Matrix means(classes, dim);
  Rng mean_rng = rng.derive("means");
  for (int c = 0; c < classes; ++c) {
    double norm = 0.0;
    do {
      for (int j = 0; j < dim; ++j) means(c, j) = mean_rng.normal();
      norm = means.row(c).norm();
    } while (norm < 1e-12);
    means.row(c) /= norm;
  }

  const Eigen::Index n = static_cast<Eigen::Index>(classes) * per_class;
  Dataset ds;
  ds.features.resize(n, dim);
  ds.labels.resize(static_cast<size_t>(n));
  ds.class_count = classes;

  Rng noise_rng = rng.derive("noise");
  Eigen::Index row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < per_class; ++k, ++row) {
      for (int j = 0; j < dim; ++j) {
        ds.features(row, j) = means(c, j) + spread * noise_rng.normal();
      }
      ds.labels[static_cast<size_t>(row)] = c;
    }
  }

  // Shuffle rows so later sequential splits are class-balanced on average.
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng shuffle_rng = rng.derive("shuffle");
  shuffle_rng.shuffle(order);

  Dataset out;
  out.features.resize(n, dim);
  out.labels.resize(static_cast<size_t>(n));
  out.class_count = classes;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.features.row(i) = ds.features.row(order[static_cast<size_t>(i)]);
    out.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(order[static_cast<size_t>(i)])];
  }
  return out;
}

std::pair<Dataset, Dataset> split_by_class_counts(const Dataset& ds, int train_per_class) {
  check_dataset(ds, "split_by_class_counts");
  if (train_per_class < 1) throw DomainError("split_by_class_counts: train_per_class must be positive");

  std::vector<int> taken(static_cast<size_t>(ds.class_count), 0);
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> test_rows;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    int y = ds.labels[static_cast<size_t>(i)];
    if (taken[static_cast<size_t>(y)] < train_per_class) {
      train_rows.push_back(i);
      ++taken[static_cast<size_t>(y)];
    } else {
      test_rows.push_back(i);
    }
  }
  for (int c = 0; c < ds.class_count; ++c) {
    if (taken[static_cast<size_t>(c)] < train_per_class) {
      throw DomainError("split_by_class_counts: class " + std::to_string(c) +
                        " has fewer than train_per_class samples");
    }
  }

  auto take = [&](const std::vector<Eigen::Index>& rows) {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.dim());
    out.labels.resize(rows.size());
    out.class_count = ds.class_count;
    for (size_t i = 0; i < rows.size(); ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(rows[i]);
      out.labels[i] = ds.labels[static_cast<size_t>(rows[i])];
    }
    return out;
  };
  return {take(train_rows), take(test_rows)};
}

std::vector<ClientShard> dirichlet_partition(const Dataset& ds, int n_clients, double alpha,
                                             Rng rng) {
  check_dataset(ds, "dirichlet_partition");
  if (n_clients < 1) throw DomainError("dirichlet_partition: need at least one client");
  if (alpha <= 0.0) throw DomainError("dirichlet_partition: alpha must be positive");
  if (ds.size() < n_clients) {
    throw DomainError("dirichlet_partition: fewer samples than clients");
  }

  // Rows of each class, in dataset order.
  std::vector<std::vector<Eigen::Index>> class_rows(static_cast<size_t>(ds.class_count));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    class_rows[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])].push_back(i);
  }

  std::vector<std::vector<Eigen::Index>> assigned(static_cast<size_t>(n_clients));
  for (int c = 0; c < ds.class_count; ++c) {
    auto& rows = class_rows[static_cast<size_t>(c)];
    if (rows.empty()) continue;
    Rng class_rng = rng.derive("class", static_cast<uint64_t>(c));
    std::vector<double> props = class_rng.dirichlet(alpha, static_cast<size_t>(n_clients));
    // Largest-remainder rounding of proportions to integer counts.
    const size_t m = rows.size();
    std::vector<size_t> counts(static_cast<size_t>(n_clients), 0);
    std::vector<std::pair<double, int>> remainders;
    size_t assigned_total = 0;
    for (int k = 0; k < n_clients; ++k) {
      double exact = props[static_cast<size_t>(k)] * static_cast<double>(m);
      size_t base = static_cast<size_t>(std::floor(exact));
      counts[static_cast<size_t>(k)] = base;
      assigned_total += base;
      remainders.emplace_back(exact - std::floor(exact), k);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;  // deterministic tie-break
    });
    for (size_t r = 0; assigned_total < m; ++r, ++assigned_total) {
      ++counts[static_cast<size_t>(remainders[r % remainders.size()].second)];
    }
    class_rng.shuffle(rows);
    size_t pos = 0;
    for (int k = 0; k < n_clients; ++k) {
      for (size_t t = 0; t < counts[static_cast<size_t>(k)]; ++t, ++pos) {
        assigned[static_cast<size_t>(k)].push_back(rows[pos]);
      }
    }
  }

  // No client may end up empty: move one sample from the fullest shard.
  Rng fix_rng = rng.derive("empty_fix");
  for (int k = 0; k < n_clients; ++k) {
    if (!assigned[static_cast<size_t>(k)].empty()) continue;
    int donor = 0;
    for (int j = 1; j < n_clients; ++j) {
      if (assigned[static_cast<size_t>(j)].size() > assigned[static_cast<size_t>(donor)].size()) {
        donor = j;
      }
    }
    auto& pool = assigned[static_cast<size_t>(donor)];
    if (pool.size() < 2) throw DomainError("dirichlet_partition: cannot fix empty client");
    size_t pick = fix_rng.next_index(pool.size());
    assigned[static_cast<size_t>(k)].push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }

  std::vector<ClientShard> shards;
  shards.reserve(static_cast<size_t>(n_clients));
  for (int k = 0; k < n_clients; ++k) {
    auto& rows = assigned[static_cast<size_t>(k)];
    std::sort(rows.begin(), rows.end());
    ClientShard shard;
    shard.client_id = k;
    shard.data.features.resize(static_cast<Eigen::Index>(rows.size()), ds.dim());
    shard.data.labels.resize(rows.size());
    shard.data.class_count = ds.class_count;
    shard.source_indices = rows;
    for (size_t i = 0; i < rows.size(); ++i) {
      shard.data.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(rows[i]);
      shard.data.labels[i] = ds.labels[static_cast<size_t>(rows[i])];
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

ClientShard apply_label_flip(const ClientShard& shard, [[maybe_unused]] Rng rng) {
  check_dataset(shard.data, "apply_label_flip");
  ClientShard out = shard;
  out.is_unlearn_target = true;
  out.attacked_indices.clear();
  for (Eigen::Index i = 0; i < out.data.size(); ++i) {
    auto& y = out.data.labels[static_cast<size_t>(i)];
    y = (y + 1) % out.data.class_count;
    out.attacked_indices.push_back(i);
  }
  return out;
}

BackdoorResult apply_backdoor(const Dataset& ds, double fraction, double trigger_value,
                              int target_label, Rng rng) {
  check_dataset(ds, "apply_backdoor");
  if (fraction <= 0.0 || fraction > 1.0) {
    throw DomainError("apply_backdoor: fraction must lie in (0, 1]");
  }
  if (target_label < 0 || target_label >= ds.class_count) {
    throw DomainError("apply_backdoor: target_label out of range");
  }

  const Eigen::Index n = ds.size();
  Eigen::Index poison = static_cast<Eigen::Index>(
      std::ceil(fraction * static_cast<double>(n)));
  poison = std::min(poison, n);

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  rng.shuffle(order);
  std::vector<Eigen::Index> chosen(order.begin(), order.begin() + poison);
  std::sort(chosen.begin(), chosen.end());

  BackdoorResult result;
  result.data = ds;
  result.attacked_indices = chosen;
  const Eigen::Index last = ds.dim() - 1;
  for (Eigen::Index row : chosen) {
    result.data.features(row, last) = trigger_value;
    result.data.labels[static_cast<size_t>(row)] = target_label;
  }
  return result;
}

Dataset apply_trigger(const Dataset& ds, double trigger_value) {
  check_dataset(ds, "apply_trigger");
  Dataset out = ds;
  out.features.col(ds.dim() - 1).setConstant(trigger_value);
  return out;
}

ClientShard filter_shard(const ClientShard& shard, const std::vector<Eigen::Index>& keep_rows) {
  check_dataset(shard.data, "filter_shard");
  for (Eigen::Index r : keep_rows) {
    if (r < 0 || r >= shard.data.size()) throw DomainError("filter_shard: row out of range");
  }
  std::set<Eigen::Index> attacked(shard.attacked_indices.begin(), shard.attacked_indices.end());

  ClientShard out;
  out.client_id = shard.client_id;
  out.is_unlearn_target = shard.is_unlearn_target;
  out.data.features.resize(static_cast<Eigen::Index>(keep_rows.size()), shard.data.dim());
  out.data.labels.resize(keep_rows.size());
  out.data.class_count = shard.data.class_count;
  for (size_t i = 0; i < keep_rows.size(); ++i) {
    Eigen::Index r = keep_rows[i];
    out.data.features.row(static_cast<Eigen::Index>(i)) = shard.data.features.row(r);
    out.data.labels[i] = shard.data.labels[static_cast<size_t>(r)];
    if (!shard.source_indices.empty()) {
      out.source_indices.push_back(shard.source_indices[static_cast<size_t>(r)]);
    }
    if (attacked.count(r)) out.attacked_indices.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

Dataset select_by_classes(const Dataset& ds, const std::vector<int>& classes, bool keep) {
  check_dataset(ds, "select_by_classes");
  std::set<int> wanted(classes.begin(), classes.end());
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    bool in = wanted.count(ds.labels[static_cast<size_t>(i)]) > 0;
    if (in == keep) rows.push_back(i);
  }
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.dim());
  out.labels.resize(rows.size());
  out.class_count = ds.class_count;
  for (size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(rows[i]);
    out.labels[i] = ds.labels[static_cast<size_t>(rows[i])];
  }
  return out;
}

void mark_attacked(std::vector<ClientShard>& shards,
                   const std::vector<Eigen::Index>& attacked_source_rows) {
  std::set<Eigen::Index> attacked(attacked_source_rows.begin(), attacked_source_rows.end());
  for (auto& shard : shards) {
    shard.attacked_indices.clear();
    for (size_t i = 0; i < shard.source_indices.size(); ++i) {
      if (attacked.count(shard.source_indices[i])) {
        shard.attacked_indices.push_back(static_cast<Eigen::Index>(i));
        shard.is_unlearn_target = true;
      }
    }
  }
}

void export_csv(const Dataset& ds, const std::string& path) {
  check_dataset(ds, "export_csv");
  std::ofstream out(path);
  if (!out) throw IoError("export_csv: cannot open " + path);
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[32];
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
      out << buf << ',';
    }
    out << ds.labels[static_cast<size_t>(i)] << '\n';
  }
  if (!out) throw IoError("export_csv: write failed for " + path);
}

Dataset import_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("import_csv: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw IoError("import_csv: empty file " + path);

  Eigen::Index dim = static_cast<Eigen::Index>(std::count(header.begin(), header.end(), ',')) ;
  if (dim < 1) throw IoError("import_csv: malformed header in " + path);

  std::vector<double> values;
  Labels labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    Eigen::Index col = 0;
    for (; std::getline(row, cell, ','); ++col) {
      if (col < dim) {
        values.push_back(std::stod(cell));
      } else {
        labels.push_back(std::stoi(cell));
      }
    }
    if (col != dim + 1) throw IoError("import_csv: row width mismatch in " + path);
  }

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(labels.size()), dim);
  std::copy(values.begin(), values.end(), ds.features.data());
  ds.labels = std::move(labels);
  int max_label = 0;
  for (int y : ds.labels) {
    if (y < 0) throw DomainError("import_csv: negative label");
    max_label = std::max(max_label, y);
  }
  ds.class_count = max_label + 1;
  return ds;
}

}  // namespace fused

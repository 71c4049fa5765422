#include <algorithm>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "fused/data.hpp"
#include "fused/errors.hpp"
#include "fused/metrics.hpp"
#include "fused/model.hpp"
#include "fused/training.hpp"

using namespace fused;

namespace {

Dataset small_dataset(std::uint64_t seed = 1) {
  return gen_synthetic(4, 6, 25, 0.3, Rng(seed));
}

}  // namespace

TEST_CASE("gen_synthetic shapes, label range, and class balance") {
  Dataset ds = small_dataset();
  CHECK(ds.size() == 100);
  CHECK(ds.dim() == 6);
  CHECK(ds.class_count == 4);
  std::vector<int> counts(4, 0);
  for (int y : ds.labels) {
    REQUIRE(y >= 0);
    REQUIRE(y < 4);
    counts[(size_t)y]++;
  }
  for (int c : counts) CHECK(c == 25);
}

TEST_CASE("gen_synthetic is deterministic in the seed") {
  Dataset a = small_dataset(9);
  Dataset b = small_dataset(9);
  CHECK((a.features - b.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.labels == b.labels);
  Dataset c = small_dataset(10);
  CHECK((a.features - c.features).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("gen_synthetic rejects bad arguments") {
  CHECK_THROWS_AS(gen_synthetic(0, 6, 25, 0.3, Rng(1)), DomainError);
  CHECK_THROWS_AS(gen_synthetic(4, 0, 25, 0.3, Rng(1)), DomainError);
  CHECK_THROWS_AS(gen_synthetic(4, 6, 0, 0.3, Rng(1)), DomainError);
  CHECK_THROWS_AS(gen_synthetic(4, 6, 25, -0.1, Rng(1)), DomainError);
}

TEST_CASE("generated blobs are learnable by a small classifier") {
  Dataset ds = gen_synthetic(4, 8, 80, 0.25, Rng(3));
  auto [train, test] = split_by_class_counts(ds, 60);
  LayeredModel m = new_mlp({8, 16, 4}, 1.0, Rng(4));
  Rng rng(5);
  for (int e = 0; e < 40; ++e) {
    auto r = train_local(m, train, 1, 0.2, 32, rng);
    m = r.model;
  }
  CHECK(accuracy(m, test) > 0.8);
}

TEST_CASE("split_by_class_counts keeps per-class counts and loses nothing") {
  Dataset ds = small_dataset(2);
  auto [train, test] = split_by_class_counts(ds, 15);
  CHECK(train.size() == 4 * 15);
  CHECK(test.size() == 4 * 10);
  CHECK(train.class_count == 4);
  std::vector<int> tr(4, 0), te(4, 0);
  for (int y : train.labels) tr[(size_t)y]++;
  for (int y : test.labels) te[(size_t)y]++;
  for (int c = 0; c < 4; ++c) {
    CHECK(tr[(size_t)c] == 15);
    CHECK(te[(size_t)c] == 10);
  }
  CHECK_THROWS_AS(split_by_class_counts(ds, 26), DomainError);  // more than a class holds
}

TEST_CASE("dirichlet_partition covers every sample exactly once") {
  Dataset ds = small_dataset(3);
  for (double alpha : {0.1, 1.0, 5.0}) {
    auto shards = dirichlet_partition(ds, 7, alpha, Rng(11));
    REQUIRE(shards.size() == 7);
    std::vector<int> seen(static_cast<size_t>(ds.size()), 0);
    Eigen::Index total = 0;
    for (const auto& sh : shards) {
      CHECK(sh.data.size() > 0);  // no empty shard
      CHECK(sh.data.class_count == ds.class_count);
      REQUIRE(sh.source_indices.size() == static_cast<size_t>(sh.data.size()));
      total += sh.data.size();
      for (size_t i = 0; i < sh.source_indices.size(); ++i) {
        Eigen::Index src = sh.source_indices[i];
        REQUIRE(src >= 0);
        REQUIRE(src < ds.size());
        seen[(size_t)src]++;
        // the shard row really is that source row
        CHECK((sh.data.features.row((Eigen::Index)i) - ds.features.row(src)).cwiseAbs().maxCoeff() ==
              0.0);
        CHECK(sh.data.labels[i] == ds.labels[(size_t)src]);
      }
    }
    CHECK(total == ds.size());
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_CASE("dirichlet_partition ids are sequential and deterministic") {
  Dataset ds = small_dataset(4);
  auto a = dirichlet_partition(ds, 5, 0.5, Rng(21));
  auto b = dirichlet_partition(ds, 5, 0.5, Rng(21));
  for (size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].client_id == static_cast<int>(k));
    CHECK(a[k].source_indices == b[k].source_indices);
  }
  CHECK_THROWS_AS(dirichlet_partition(ds, 0, 0.5, Rng(1)), DomainError);
  CHECK_THROWS_AS(dirichlet_partition(ds, 5, 0.0, Rng(1)), DomainError);
  // more clients than samples cannot satisfy the no-empty-shard rule
  CHECK_THROWS_AS(dirichlet_partition(ds, 101, 0.5, Rng(1)), DomainError);
}

TEST_CASE("apply_label_flip rotates labels and marks the shard") {
  Dataset ds = small_dataset(5);
  auto shards = dirichlet_partition(ds, 4, 1.0, Rng(6));
  ClientShard flipped = apply_label_flip(shards[2], Rng(7));
  CHECK(flipped.is_unlearn_target);
  CHECK(flipped.attacked_indices.size() == static_cast<size_t>(flipped.data.size()));
  CHECK((flipped.data.features - shards[2].data.features).cwiseAbs().maxCoeff() == 0.0);
  for (size_t i = 0; i < flipped.data.labels.size(); ++i) {
    CHECK(flipped.data.labels[i] == (shards[2].data.labels[i] + 1) % ds.class_count);
  }
}

TEST_CASE("apply_backdoor poisons ceil(fraction*n) distinct rows") {
  Dataset ds = small_dataset(6);
  BackdoorResult res = apply_backdoor(ds, 0.13, 2.5, 1, Rng(8));
  // ceil(0.13 * 100) = 13
  CHECK(res.attacked_indices.size() == 13);
  std::set<Eigen::Index> uniq(res.attacked_indices.begin(), res.attacked_indices.end());
  CHECK(uniq.size() == 13);
  Eigen::Index last = ds.dim() - 1;
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    bool attacked = uniq.count(r) > 0;
    if (attacked) {
      CHECK(res.data.features(r, last) == 2.5);
      CHECK(res.data.labels[(size_t)r] == 1);
    } else {
      CHECK((res.data.features.row(r) - ds.features.row(r)).cwiseAbs().maxCoeff() == 0.0);
      CHECK(res.data.labels[(size_t)r] == ds.labels[(size_t)r]);
    }
    // features other than the trigger are untouched either way
    CHECK((res.data.features.row(r).head(last) - ds.features.row(r).head(last))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(apply_backdoor(ds, 0.0, 2.5, 1, Rng(1)), DomainError);
  CHECK_THROWS_AS(apply_backdoor(ds, 1.5, 2.5, 1, Rng(1)), DomainError);
  CHECK_THROWS_AS(apply_backdoor(ds, 0.1, 2.5, 9, Rng(1)), DomainError);
}

TEST_CASE("apply_trigger stamps every row and keeps labels") {
  Dataset ds = small_dataset(7);
  Dataset probe = apply_trigger(ds, 1.25);
  CHECK(probe.labels == ds.labels);
  Eigen::Index last = ds.dim() - 1;
  CHECK((probe.features.col(last).array() - 1.25).abs().maxCoeff() == 0.0);
  CHECK((probe.features.leftCols(last) - ds.features.leftCols(last)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("filter_shard keeps the requested rows and remaps annotations") {
  Dataset ds = small_dataset(8);
  auto shards = dirichlet_partition(ds, 3, 1.0, Rng(9));
  ClientShard sh = shards[0];
  REQUIRE(sh.data.size() >= 4);
  sh.attacked_indices = {1, 3};
  std::vector<Eigen::Index> keep = {0, 3};
  ClientShard f = filter_shard(sh, keep);
  CHECK(f.data.size() == 2);
  CHECK(f.client_id == sh.client_id);
  CHECK((f.data.features.row(0) - sh.data.features.row(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f.data.features.row(1) - sh.data.features.row(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.source_indices[0] == sh.source_indices[0]);
  CHECK(f.source_indices[1] == sh.source_indices[3]);
  // attacked row 3 survives as local row 1, attacked row 1 is gone
  CHECK(f.attacked_indices == std::vector<Eigen::Index>{1});
  CHECK_THROWS_AS(filter_shard(sh, {sh.data.size()}), DomainError);
}

TEST_CASE("select_by_classes keeps or drops exactly the listed classes") {
  Dataset ds = small_dataset(9);
  Dataset kept = select_by_classes(ds, {1, 3}, true);
  Dataset dropped = select_by_classes(ds, {1, 3}, false);
  CHECK(kept.size() + dropped.size() == ds.size());
  CHECK(kept.size() == 50);
  for (int y : kept.labels) CHECK((y == 1 || y == 3));
  for (int y : dropped.labels) CHECK((y == 0 || y == 2));
  CHECK(kept.class_count == ds.class_count);
}

TEST_CASE("mark_attacked maps dataset rows to shard-local rows") {
  Dataset ds = small_dataset(10);
  auto shards = dirichlet_partition(ds, 4, 1.0, Rng(12));
  std::vector<Eigen::Index> attacked = {shards[1].source_indices[0], shards[1].source_indices[2],
                                        shards[3].source_indices[1]};
  mark_attacked(shards, attacked);
  CHECK(shards[0].attacked_indices.empty());
  CHECK(shards[1].attacked_indices == std::vector<Eigen::Index>{0, 2});
  CHECK(shards[3].attacked_indices == std::vector<Eigen::Index>{1});
}

TEST_CASE("csv export and import round-trip exactly") {
  Dataset ds = gen_synthetic(3, 5, 8, 0.4, Rng(13));
  std::string path = "test_data_roundtrip.csv";
  export_csv(ds, path);
  Dataset back = import_csv(path);
  std::remove(path.c_str());
  REQUIRE(back.size() == ds.size());
  REQUIRE(back.dim() == ds.dim());
  CHECK(back.labels == ds.labels);
  CHECK(back.class_count == ds.class_count);
  // %.17g output preserves doubles bit for bit
  CHECK((back.features - ds.features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("import_csv reports a missing file as an io failure") {
  CHECK_THROWS_AS(import_csv("no_such_file_here.csv"), IoError);
}

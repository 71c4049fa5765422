#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <set>
#include <vector>

#include "doctest.h"
#include "fused/adapter.hpp"
#include "fused/data.hpp"
#include "fused/errors.hpp"
#include "fused/model.hpp"
#include "fused/training.hpp"

using namespace fused;

namespace {

LayeredModel adapter_host(std::uint64_t seed = 1) {
  return new_mlp({6, 10, 8, 4}, 1.0, Rng(seed));
}

Dataset adapter_data(std::uint64_t seed = 2) {
  return gen_synthetic(4, 6, 30, 0.3, Rng(seed));
}

// Max absolute difference between two same-shaped models, all parameters.
double model_gap(const LayeredModel& a, const LayeredModel& b) {
  return (flatten_parameters(a) - flatten_parameters(b)).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("mask indices are ascending, unique, in range, zero-valued") {
  LayeredModel m = adapter_host();
  SparseAdapter a = make_sparse_adapter(m.layer(2), 2, 0.3, Rng(3));
  CHECK(a.layer_index == 2);
  CHECK(a.rows == 10);
  CHECK(a.cols == 8);
  CHECK(a.block_size() == 10 * 8 + 8);
  REQUIRE(a.kept.size() == a.values.size());
  CHECK(std::is_sorted(a.kept.begin(), a.kept.end()));
  std::set<std::uint32_t> uniq(a.kept.begin(), a.kept.end());
  CHECK(uniq.size() == a.kept.size());
  for (std::uint32_t idx : a.kept) CHECK(idx < (std::uint32_t)a.block_size());
  for (double v : a.values) CHECK(v == 0.0);
}

TEST_CASE("kept count concentrates near keep_rate * block") {
  // One layer with a 10000-entry block: binomial(10000, 0.1) stays within
  // three standard deviations (30) of 1000 for any fixed seed.
  DenseLayer big;
  big.weights = Matrix::Zero(99, 100);
  big.biases = Matrix::Zero(1, 100);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    SparseAdapter a = make_sparse_adapter(big, 1, 0.1, Rng(seed));
    CHECK(a.kept_count() >= 1000 - 90);
    CHECK(a.kept_count() <= 1000 + 90);
  }
  CHECK_THROWS_AS(make_sparse_adapter(big, 1, 0.0, Rng(1)), DomainError);
  CHECK_THROWS_AS(make_sparse_adapter(big, 1, 1.5, Rng(1)), DomainError);
}

TEST_CASE("make_adapter_set covers the requested layers once") {
  LayeredModel m = adapter_host(4);
  AdapterSet set = make_adapter_set(m, {3, 1}, 0.2, Rng(5));
  REQUIRE(set.size() == 2);
  CHECK(set.count(1) == 1);
  CHECK(set.count(3) == 1);
  CHECK(set.at(1).rows == m.layer(1).weights.rows());
  CHECK(set.at(3).cols == m.layer(3).weights.cols());
  CHECK_THROWS_AS(make_adapter_set(m, {2, 2}, 0.2, Rng(1)), DomainError);
  CHECK_THROWS_AS(make_adapter_set(m, {9}, 0.2, Rng(1)), DomainError);
}

TEST_CASE("zero-valued adapters merge to a bit-identical model") {
  LayeredModel m = adapter_host(6);
  AdapterSet set = make_adapter_set(m, {1, 2, 3}, 0.5, Rng(7));
  LayeredModel merged = apply_adapters(m, set);
  CHECK(model_gap(m, merged) == 0.0);
  Rng rng(8);
  Matrix x(5, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Matrix la = forward(m, x);
  Matrix lb = forward(merged, x);
  CHECK(std::memcmp(la.data(), lb.data(), sizeof(double) * (size_t)la.size()) == 0);
}

TEST_CASE("subtract_adapters undoes apply_adapters") {
  LayeredModel m = adapter_host(9);
  AdapterSet set = make_adapter_set(m, {2}, 0.4, Rng(10));
  Rng rng(11);
  for (double& v : set.at(2).values) v = rng.normal();
  LayeredModel merged = apply_adapters(m, set);
  CHECK(model_gap(m, merged) > 0.0);
  LayeredModel back = subtract_adapters(merged, set);
  CHECK(model_gap(m, back) <= 1e-12);
}

TEST_CASE("apply_adapters only moves kept positions") {
  LayeredModel m = adapter_host(12);
  AdapterSet set = make_adapter_set(m, {2}, 0.15, Rng(13));
  for (double& v : set.at(2).values) v = 1.0;
  LayeredModel merged = apply_adapters(m, set);
  CHECK(model_gap(m, merged) > 0.0);
  // untouched layers are verbatim copies
  CHECK((merged.layer(1).weights - m.layer(1).weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((merged.layer(3).weights - m.layer(3).weights).cwiseAbs().maxCoeff() == 0.0);
  // inside layer 2 the moved set is exactly the mask
  const SparseAdapter& a = set.at(2);
  std::set<std::uint32_t> kept(a.kept.begin(), a.kept.end());
  Vector before = flatten_parameters(m, {2});
  Vector after = flatten_parameters(merged, {2});
  for (Eigen::Index i = 0; i < before.size(); ++i) {
    if (kept.count((std::uint32_t)i)) {
      CHECK(after(i) == before(i) + 1.0);
    } else {
      CHECK(after(i) == before(i));
    }
  }
}

TEST_CASE("merged context restores its base verbatim") {
  LayeredModel m = adapter_host(14);
  MergedContext ctx;
  ctx.base = m;
  ctx.adapters = make_adapter_set(m, {1, 3}, 0.3, Rng(15));
  Rng rng(16);
  for (auto& [l, a] : ctx.adapters) {
    for (double& v : a.values) v = rng.normal();
  }
  LayeredModel restored = remove_adapters(ctx);
  Vector va = flatten_parameters(m);
  Vector vb = flatten_parameters(restored);
  CHECK(std::memcmp(va.data(), vb.data(), sizeof(double) * (size_t)va.size()) == 0);
  CHECK(model_gap(merged_model(ctx), apply_adapters(m, ctx.adapters)) == 0.0);
}

TEST_CASE("train_adapter_step moves values by minus lr times the merged gradient") {
  LayeredModel m = adapter_host(17);
  AdapterSet set = make_adapter_set(m, {2}, 0.5, Rng(18));
  Dataset ds = adapter_data(19);
  Matrix x = ds.features.topRows(8);
  Labels y(ds.labels.begin(), ds.labels.begin() + 8);
  BackwardResult bw = backward(m, x, y);  // merged == base at zero init
  Vector flat_g = flatten_gradients(bw.grads, {2});
  AdapterSet stepped = train_adapter_step(m, set, x, y, 0.25);
  const SparseAdapter& a = stepped.at(2);
  for (size_t i = 0; i < a.kept.size(); ++i) {
    CHECK(a.values[i] == doctest::Approx(-0.25 * flat_g((Eigen::Index)a.kept[i])).epsilon(1e-15));
  }
  CHECK_THROWS_AS(train_adapter_step(m, set, x, y, 0.0), TrainingError);
}

TEST_CASE("adapter training only ever touches kept positions") {
  LayeredModel m = adapter_host(20);
  AdapterSet set = make_adapter_set(m, {2, 3}, 0.2, Rng(21));
  Dataset ds = adapter_data(22);
  AdapterTrainResult r = train_adapters_local(m, set, ds, 3, 0.1, 16, Rng(23));
  // structure unchanged
  for (const auto& [l, a] : r.adapters) {
    CHECK(a.kept == set.at(l).kept);
  }
  // merged differs from base exactly at kept positions of adapted layers
  LayeredModel merged = apply_adapters(m, r.adapters);
  CHECK((merged.layer(1).weights - m.layer(1).weights).cwiseAbs().maxCoeff() == 0.0);
  for (int l : {2, 3}) {
    std::set<std::uint32_t> kept(r.adapters.at(l).kept.begin(), r.adapters.at(l).kept.end());
    Vector before = flatten_parameters(m, {l});
    Vector after = flatten_parameters(merged, {l});
    for (Eigen::Index i = 0; i < before.size(); ++i) {
      if (!kept.count((std::uint32_t)i)) CHECK(after(i) == before(i));
    }
  }
  CHECK(r.flops == train_flops(m, ds.size(), 3, 16));
}

TEST_CASE("full-density adapter training tracks dense training of those layers") {
  LayeredModel m = adapter_host(24);
  Dataset ds = adapter_data(25);
  AdapterSet set = make_adapter_set(m, {2}, 1.0, Rng(26));
  AdapterTrainResult sparse = train_adapters_local(m, set, ds, 2, 0.1, 16, Rng(27));
  std::vector<bool> trainable = {false, true, false};
  TrainResult dense = train_local(m, ds, 2, 0.1, 16, Rng(27), &trainable);
  LayeredModel merged = apply_adapters(m, sparse.adapters);
  CHECK(model_gap(merged, dense.model) <= 1e-12);
  CHECK(sparse.final_loss == doctest::Approx(dense.final_loss).epsilon(1e-12));
}

TEST_CASE("train_adapters_local validates like dense training") {
  LayeredModel m = adapter_host(28);
  AdapterSet set = make_adapter_set(m, {2}, 0.5, Rng(29));
  Dataset ds = adapter_data(30);
  CHECK_THROWS_AS(train_adapters_local(m, set, ds, 0, 0.1, 16, Rng(1)), TrainingError);
  CHECK_THROWS_AS(train_adapters_local(m, set, ds, 1, -0.1, 16, Rng(1)), TrainingError);
  CHECK_THROWS_AS(train_adapters_local(m, set, ds, 1, 0.1, 0, Rng(1)), TrainingError);
  Dataset narrow = gen_synthetic(4, 5, 10, 0.3, Rng(31));
  CHECK_THROWS_AS(train_adapters_local(m, set, narrow, 1, 0.1, 16, Rng(1)), DimensionError);
}

TEST_CASE("fedavg_adapters equals the volume-weighted per-value oracle") {
  LayeredModel m = adapter_host(32);
  AdapterSet base = make_adapter_set(m, {1, 2}, 0.3, Rng(33));
  Rng rng(34);
  std::vector<AdapterSet> sets;
  for (int k = 0; k < 4; ++k) {
    AdapterSet s = base;
    for (auto& [l, a] : s) {
      for (double& v : a.values) v = rng.normal();
    }
    sets.push_back(std::move(s));
  }
  std::vector<Eigen::Index> volumes = {5, 1, 12, 3};
  double total = 5 + 1 + 12 + 3;
  AdapterSet avg = fedavg_adapters(sets, volumes);
  for (const auto& [l, a] : avg) {
    for (size_t i = 0; i < a.values.size(); ++i) {
      double want = 0.0;
      for (size_t k = 0; k < sets.size(); ++k) {
        want += ((double)volumes[k] / total) * sets[k].at(l).values[i];
      }
      CHECK(a.values[i] == want);
    }
  }
}

TEST_CASE("fedavg_adapters rejects mismatched structures") {
  LayeredModel m = adapter_host(35);
  AdapterSet a = make_adapter_set(m, {1, 2}, 0.3, Rng(36));
  AdapterSet b = a;
  REQUIRE(!b.at(1).kept.empty());
  b.at(1).kept.pop_back();  // different mask
  b.at(1).values.pop_back();
  AdapterSet c = make_adapter_set(m, {1}, 0.3, Rng(36));
  CHECK_THROWS_AS(fedavg_adapters({}, {}), ProtocolError);
  CHECK_THROWS_AS(fedavg_adapters({a, b}, {1, 1}), ProtocolError);
  CHECK_THROWS_AS(fedavg_adapters({a, c}, {1, 1}), ProtocolError);
  CHECK_THROWS_AS(fedavg_adapters({a, a}, {1}), DimensionError);
  CHECK_THROWS_AS(fedavg_adapters({a, a}, {1, 0}), DomainError);
}

TEST_CASE("wire cost formulas count values and one-time mask setup") {
  LayeredModel m = adapter_host(38);
  AdapterSet set = make_adapter_set(m, {2, 3}, 0.4, Rng(39));
  std::uint64_t values = 0;
  std::uint64_t setup = 0;
  for (const auto& [l, a] : set) {
    values += a.kept.size() * 8;
    setup += 16 + a.kept.size() * 4;
  }
  CHECK(adapter_value_bytes(set) == values);
  CHECK(adapter_setup_bytes(set) == setup);
  CHECK(adapter_param_count(set) ==
        set.at(2).kept_count() + set.at(3).kept_count());
}

TEST_CASE("apply_adapters rejects corrupt or ill-fitting adapters") {
  LayeredModel m = adapter_host(40);
  AdapterSet set = make_adapter_set(m, {2}, 0.5, Rng(41));
  SparseAdapter& a = set.at(2);
  REQUIRE(!a.kept.empty());
  SUBCASE("value list shorter than mask") {
    a.values.pop_back();
    CHECK_THROWS_AS(apply_adapters(m, set), IntegrityError);
  }
  SUBCASE("index beyond the block") {
    a.kept.back() = (std::uint32_t)a.block_size();
    CHECK_THROWS_AS(apply_adapters(m, set), IntegrityError);
  }
  SUBCASE("wrong layer shape") {
    a.rows += 1;
    CHECK_THROWS_AS(apply_adapters(m, set), DimensionError);
  }
}

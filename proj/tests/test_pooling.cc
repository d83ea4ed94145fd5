// Copyright 2026 The mi2das Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "mi2das/dataset.h"
#include "mi2das/errors.h"
#include "mi2das/pooling.h"
#include "oracles/reference_math.h"
#include "support/test_support.h"

using namespace mi2das;

namespace {

Dataset labeled_rows(std::size_t normal, std::size_t attack) {
  Dataset ds;
  for (std::size_t i = 0; i < normal + attack; ++i) {
    FlowRecord r;
    r.id = i;
    r.features = {static_cast<double>(i % 17), static_cast<double>(i % 5)};
    r.label = i < normal ? ClassLabel::kNormal : label_from_index(1 + static_cast<int>(i % 14));
    ds.records.push_back(std::move(r));
  }
  return ds;
}

std::size_t attack_count(const Dataset& ds) {
  return static_cast<std::size_t>(
      std::count_if(ds.records.begin(), ds.records.end(), [](const FlowRecord& r) { return is_attack(*r.label); }));
}

GmmHyper gmm(int nc) {
  GmmHyper h;
  h.nc = nc;
  return h;
}

}  // namespace

TEST_CASE("novelty fitting set holds no attacks") {
  const Dataset ds = labeled_rows(300, 120);
  Layer1TrainConfig cfg;
  const Dataset fit = layer1_fitting_set(ds, cfg);
  CHECK(fit.size() == 300);
  CHECK(attack_count(fit) == 0);
}

TEST_CASE("outlier contamination count is floor(n_normal / ratio)") {
  const Dataset ds = labeled_rows(19281, 400);
  Layer1TrainConfig cfg;
  cfg.mode = Layer1Mode::kOutlier;
  cfg.contamination = {100, 1};
  const Dataset fit = layer1_fitting_set(ds, cfg);
  CHECK(attack_count(fit) == 192);
  CHECK(fit.size() == 19281 + 192);

  for (std::uint64_t normal : {350u, 500u, 1000u}) {
    cfg.contamination = {normal, 7};
    CHECK(attack_count(layer1_fitting_set(ds, cfg)) == 19281 * 7 / normal);
  }

  cfg.contamination = {100, 1};
  CHECK_THROWS_AS(layer1_fitting_set(labeled_rows(50, 0), cfg), InvalidArgument);
  CHECK_THROWS_AS(layer1_fitting_set(labeled_rows(50, 10), cfg), InvalidArgument);
}

TEST_CASE("contamination sample is seeded") {
  const Dataset ds = labeled_rows(1000, 200);
  Layer1TrainConfig cfg;
  cfg.mode = Layer1Mode::kOutlier;
  cfg.seed = 4;
  const Dataset a = layer1_fitting_set(ds, cfg);
  const Dataset b = layer1_fitting_set(ds, cfg);
  CHECK(dataset_fingerprint(a) == dataset_fingerprint(b));
}

TEST_CASE("partition spec completeness and disjointness") {
  const PartitionSpec p({ClassLabel::kXss, ClassLabel::kBackdoor});
  CHECK(p.known() == std::vector<ClassLabel>{ClassLabel::kBackdoor, ClassLabel::kXss});
  CHECK(p.unknown().size() == 12);
  std::set<ClassLabel> all(p.known().begin(), p.known().end());
  for (auto c : p.unknown()) CHECK(all.insert(c).second);
  CHECK(all.size() == 14);
  CHECK(p.is_known(ClassLabel::kXss));
  CHECK_FALSE(p.is_known(ClassLabel::kMitm));

  CHECK_THROWS_AS(PartitionSpec({ClassLabel::kNormal}), InvalidArgument);
  CHECK_THROWS_AS(PartitionSpec({ClassLabel::kXss, ClassLabel::kXss}), InvalidArgument);
  CHECK_THROWS_AS(PartitionSpec({ClassLabel::kUnknown}), InvalidArgument);
  CHECK(partition_from_json(to_json(p)) == p);
}

TEST_CASE("partition enumeration counts") {
  for (int k = 1; k <= 13; ++k) {
    CHECK(binomial(14, k) == oracle::pascal(14, k));
  }
  for (int k : {1, 4, 7, 10, 13}) {
    const auto parts = enumerate_partitions(k);
    CHECK(parts.size() == oracle::pascal(14, k));
    std::set<std::vector<ClassLabel>> distinct;
    for (const auto& p : parts) distinct.insert(p.known());
    CHECK(distinct.size() == parts.size());
  }
  CHECK(enumerate_partitions(7).size() == 3432);
  CHECK(enumerate_partitions(1).size() == 14);
  CHECK(enumerate_partitions(13).size() == 14);
  CHECK_THROWS_AS(enumerate_partitions(0), InvalidArgument);
  CHECK_THROWS_AS(enumerate_partitions(14), InvalidArgument);
}

TEST_CASE("limited enumeration is a seeded subset") {
  const auto all = enumerate_partitions(4);
  const auto a = enumerate_partitions(4, 50, 9);
  const auto b = enumerate_partitions(4, 50, 9);
  const auto c = enumerate_partitions(4, 50, 10);
  CHECK(a.size() == 50);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  std::set<std::vector<ClassLabel>> pool;
  for (const auto& p : all) pool.insert(p.known());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(pool.count(a[i].known()) == 1);
    if (i > 0) CHECK(a[i - 1].known() < a[i].known());
  }
  CHECK(enumerate_partitions(13, 14, 1).size() == 14);
  CHECK_THROWS_AS(enumerate_partitions(13, 50, 1), InvalidArgument);
}

TEST_CASE("routing on the synthetic desk profile") {
  const Dataset ds = generate_synthetic(desk_profile(7));
  const TrainTest tt = make_split(ds, {SplitMode::kRandomStratified, 0.5, 0});
  Layer1TrainConfig cfg;
  cfg.detector = gmm(3);
  const DetectorModel l1 = train_layer1(tt.train, cfg);
  const PartitionSpec part({ClassLabel::kBackdoor, ClassLabel::kDdosUdp, ClassLabel::kMitm, ClassLabel::kXss});
  const Dataset attacks = tt.train.filter([](const FlowRecord& r) { return is_attack(*r.label); });
  const DetectorModel l2 = train_layer2(attacks, part, LofHyper{.k = 10}, 5.0);
  CHECK(l2.fingerprint() != l1.fingerprint());

  std::map<Pool, std::size_t> counts;
  std::size_t unknown_in_unknown = 0, unknown_total = 0;
  for (const auto& r : tt.test.records) {
    const PoolAssignment a = route(r, l1, l2);
    ++counts[a.pool];
    CHECK(a.layer2_score.has_value() == (a.pool != Pool::kNormal));
    if (is_attack(*r.label) && !part.is_known(*r.label)) {
      ++unknown_total;
      unknown_in_unknown += a.pool == Pool::kUnknown;
    }
    const auto j = audit_record(r.id, a);
    CHECK(j.at("pool") == std::string(to_string(a.pool)));
  }
  std::size_t total = 0;
  for (const auto& [p, n] : counts) total += n;
  CHECK(total == tt.test.size());
  CHECK(static_cast<double>(unknown_in_unknown) / static_cast<double>(unknown_total) > 0.9);

  // A Normal training point at a component mean stays in the normal pool.
  const auto& g = std::get<GaussianMixture>(l1.impl());
  CHECK(route(g.mean(0), l1, l2).pool == Pool::kNormal);
}

TEST_CASE("layer-2 with every class known sees only known attacks") {
  const Dataset ds = generate_synthetic(desk_profile(3));
  const Dataset attacks = ds.filter([](const FlowRecord& r) { return is_attack(*r.label); });
  std::vector<ClassLabel> all(attack_classes().begin(), attack_classes().end());
  const PartitionSpec part(all);
  CHECK(part.unknown().empty());
  for (const auto& r : attacks.records) CHECK(part.is_known(*r.label));
  const DetectorModel l2 = train_layer2(attacks, part, gmm(1), 5.0);
  CHECK(l2.threshold().has_value());
}

TEST_CASE("routing requires calibrated detectors") {
  const Dataset ds = generate_synthetic(desk_profile(3));
  const DetectorModel raw = fit_detector(ds, GmmHyper{});
  CHECK_THROWS_AS(route(ds.records[0], raw, raw), std::logic_error);
}

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
#include <cmath>
#include <random>

#include "doctest.h"
#include "mi2das/errors.h"
#include "mi2das/metrics.h"
#include "mi2das/pooling.h"
#include "mi2das/rng.h"

using namespace mi2das;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < rows.size(); ++i) names.push_back("c" + std::to_string(i));
  ConfusionMatrix cm(names);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) cm.add(i, j, rows[i][j]);
  }
  return cm;
}

void check_unit_interval(const MetricBlock& b) {
  for (const auto& [name, v] : b.scalars()) {
    if (v) {
      CHECK(*v >= 0.0);
      CHECK(*v <= 1.0);
    }
  }
}

}  // namespace

TEST_CASE("confusion counts") {
  const std::vector<std::string> truth{"A", "A", "B"}, pred{"A", "B", "B"};
  const ConfusionMatrix cm = confusion(truth, pred, {"A", "B"});
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.total() == 3);

  const ConfusionMatrix id = confusion(truth, truth, {"A", "B"});
  CHECK(id.at(0, 1) == 0);
  CHECK(id.at(1, 0) == 0);

  const std::vector<std::string> none;
  CHECK_THROWS_AS(confusion(none, none, {"A"}), InvalidArgument);
  const std::vector<std::string> bad{"C"};
  CHECK_THROWS_AS(confusion(bad, bad, {"A", "B"}), InvalidArgument);
}

TEST_CASE("binary metrics by hand") {
  ConfusionMatrix cm({"Normal", "Attack"});
  cm.add(1, 1, 95);  // TP
  cm.add(1, 0, 5);   // FN
  cm.add(0, 1, 10);  // FP
  cm.add(0, 0, 90);  // TN
  const MetricBlock b = binary_metrics(cm);
  CHECK(*b.tpr == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(*b.fpr == doctest::Approx(0.10).epsilon(1e-15));
  CHECK(*b.precision == doctest::Approx(95.0 / 105.0).epsilon(1e-15));
  CHECK(std::abs(*b.precision - 0.9048) < 5e-5);
  CHECK(*b.accuracy == doctest::Approx(185.0 / 200.0).epsilon(1e-15));

  // TPR 1.000 means no false negatives.
  const auto bc = binary_confusion({true, true, false, false}, {true, true, true, false});
  const MetricBlock perfect = binary_metrics(bc);
  CHECK(*perfect.tpr == 1.0);
  CHECK(bc.at(1, 0) == 0);
  CHECK(*perfect.fpr == 0.5);

  const MetricBlock no_pos = binary_metrics(binary_confusion({false, false}, {false, true}));
  CHECK_FALSE(no_pos.tpr.has_value());
  CHECK(no_pos.fpr.has_value());
  CHECK(*no_pos.precision == 0.0);  // one false positive, no true positive
}

TEST_CASE("three-class fixture") {
  const MetricBlock b = multiclass_metrics(from_rows({{10, 0, 0}, {0, 5, 5}, {0, 0, 10}}));
  CHECK(*b.macro_accuracy == doctest::Approx(2.5 / 3.0).epsilon(1e-15));
  CHECK(std::abs(*b.macro_accuracy - 0.8333) < 5e-5);
  CHECK(*b.per_class.at("c1").f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(*b.per_class.at("c2").f1 == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(*b.macro_f1 == doctest::Approx((1.0 + 2.0 / 3.0 + 0.8) / 3.0).epsilon(1e-15));
  CHECK(std::abs(*b.macro_f1 - 0.8222) < 5e-5);
  CHECK(*b.micro_accuracy == doctest::Approx(25.0 / 30.0).epsilon(1e-15));
}

TEST_CASE("perfect diagonal") {
  const MetricBlock b = multiclass_metrics(from_rows({{3, 0}, {0, 7}}));
  CHECK(*b.macro_f1 == 1.0);
  CHECK(*b.weighted_f1 == 1.0);
  CHECK(*b.macro_accuracy == 1.0);
  CHECK(*b.micro_accuracy == 1.0);
}

TEST_CASE("multiclass invariants on random matrices") {
  Rng rng(99);
  std::uniform_int_distribution<int> cell(0, 20), size(2, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = size(rng);
    std::vector<std::vector<std::uint64_t>> rows(k, std::vector<std::uint64_t>(k));
    for (auto& r : rows) {
      for (auto& v : r) v = static_cast<std::uint64_t>(cell(rng));
    }
    if (trial % 10 == 0) rows[0].assign(k, 0);  // a zero-support class
    const MetricBlock b = multiclass_metrics(from_rows(rows));
    check_unit_interval(b);

    double trace = 0.0, total = 0.0;
    for (int i = 0; i < k; ++i) {
      trace += static_cast<double>(rows[i][i]);
      for (int j = 0; j < k; ++j) total += static_cast<double>(rows[i][j]);
    }
    if (total > 0) CHECK(*b.micro_accuracy == trace / total);
    CHECK(b.micro_accuracy == b.accuracy);

    // Duplicating every sample of one class m times leaves recalls and
    // macro accuracy unchanged.
    const int cls = trial % k;
    const std::uint64_t m = 1 + static_cast<std::uint64_t>(trial % 4);
    auto scaled = rows;
    for (auto& v : scaled[cls]) v *= m;
    const MetricBlock s = multiclass_metrics(from_rows(scaled));
    for (const auto& [name, pc] : b.per_class) {
      CHECK(pc.recall == s.per_class.at(name).recall);
    }
    if (b.macro_accuracy) CHECK(*s.macro_accuracy == doctest::Approx(*b.macro_accuracy).epsilon(1e-14));
  }
}

TEST_CASE("weighted F1 equals macro F1 under equal supports") {
  Rng rng(5);
  std::uniform_int_distribution<int> cell(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 4;
    std::vector<std::vector<std::uint64_t>> rows(k, std::vector<std::uint64_t>(k, 0));
    for (auto& r : rows) {
      std::uint64_t left = 30;
      for (std::size_t j = 0; j + 1 < k; ++j) {
        const auto v = std::min<std::uint64_t>(left, static_cast<std::uint64_t>(cell(rng)));
        r[j] = v;
        left -= v;
      }
      r[k - 1] = left;
    }
    const MetricBlock b = multiclass_metrics(from_rows(rows));
    CHECK(*b.weighted_f1 == doctest::Approx(*b.macro_f1).epsilon(1e-15));
  }
}

TEST_CASE("zero-support classes are excluded, not zeroed") {
  const MetricBlock b = multiclass_metrics(from_rows({{0, 0, 0}, {0, 4, 0}, {0, 1, 5}}));
  REQUIRE(b.excluded_classes.size() == 1);
  CHECK(b.excluded_classes[0] == "c0");
  CHECK_FALSE(b.per_class.at("c0").recall.has_value());
  CHECK_FALSE(b.per_class.at("c0").f1.has_value());
  CHECK(*b.macro_accuracy == doctest::Approx((1.0 + 5.0 / 6.0) / 2.0).epsilon(1e-15));
  const auto j = to_json(b);
  CHECK(j.at("per_class").at("c0").at("f1").is_null());
  CHECK(j.at("tpr").is_null());
}

TEST_CASE("open-set recall") {
  const std::vector<Pool> all_ok{Pool::kKnownAttack, Pool::kUnknown, Pool::kKnownAttack};
  const auto perfect = openset_recall({true, false, true}, all_ok);
  CHECK(*perfect.known_recall == 1.0);
  CHECK(*perfect.unknown_recall == 1.0);

  const std::vector<Pool> three_of_four{Pool::kKnownAttack, Pool::kKnownAttack, Pool::kKnownAttack,
                                        Pool::kUnknown};
  const auto r = openset_recall({true, true, true, true}, three_of_four);
  CHECK(*r.known_recall == 0.75);
  CHECK_FALSE(r.unknown_recall.has_value());
  CHECK_THROWS_AS(openset_recall({true}, three_of_four), InvalidArgument);
}

TEST_CASE("aggregate mean and sample stddev") {
  MetricBlock a, b;
  a.macro_f1 = 0.9;
  b.macro_f1 = 1.0;
  const std::vector<MetricBlock> blocks{a, b};
  const auto agg = aggregate(blocks);
  CHECK(agg.at("macro_f1").mean == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(agg.at("macro_f1").stddev == doctest::Approx(std::sqrt(0.005)).epsilon(1e-12));
  CHECK(std::abs(agg.at("macro_f1").stddev - 0.0707) < 5e-5);
  CHECK(agg.at("macro_f1").n == 2);
  CHECK(agg.count("tpr") == 0);  // never defined

  MetricBlock c;
  c.tpr = 0.5;
  const auto partial = aggregate(std::vector<MetricBlock>{a, c});
  CHECK(partial.at("tpr").n == 1);
  CHECK(partial.at("tpr").undefined == 1);
  CHECK(format_mean_std(agg.at("macro_f1"), 3) == "0.950 ± 0.071");

  const std::vector<MetricBlock> same{a, a, a};
  CHECK(aggregate(same).at("macro_f1").stddev == 0.0);
  const std::vector<MetricBlock> one{a};
  CHECK(aggregate(one).at("macro_f1").single);
  CHECK(aggregate(one).at("macro_f1").stddev == 0.0);
  CHECK_THROWS_AS(aggregate(std::vector<MetricBlock>{}), InvalidArgument);
}

TEST_CASE("aggregate does not depend on block order") {
  Rng rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MetricBlock> blocks(164);
  for (auto& b : blocks) b.macro_f1 = u(rng);
  const auto ref = aggregate(blocks);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(blocks.begin(), blocks.end(), rng);
    const auto agg = aggregate(blocks);
    CHECK(agg.at("macro_f1").mean == ref.at("macro_f1").mean);
    CHECK(agg.at("macro_f1").stddev == ref.at("macro_f1").stddev);
  }
  CHECK(format_mean_std(ref.at("macro_f1"), 3).find(" ± ") != std::string::npos);
}

TEST_CASE("metric block json round trip") {
  const MetricBlock b = multiclass_metrics(from_rows({{10, 0, 0}, {0, 5, 5}, {0, 0, 10}}));
  const MetricBlock back = metric_block_from_json(to_json(b));
  CHECK(to_json(back) == to_json(b));
  CHECK(to_json(b).at("balanced_accuracy") == to_json(b).at("macro_accuracy"));
}

TEST_CASE("csv emitter quotes fields") {
  const std::string csv = to_csv({"Model", "Parameter"}, {{"RF", "nc=2, th_per=5"}, {"say \"hi\"", "x"}});
  CHECK(csv == "Model,Parameter\r\nRF,\"nc=2, th_per=5\"\r\n\"say \"\"hi\"\"\",x\r\n");
  CHECK(format_metric(std::nullopt) == "");
  CHECK(format_metric(0.95, 3) == "0.950");
}

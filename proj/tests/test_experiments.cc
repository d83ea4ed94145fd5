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
#include <random>
#include <set>

#include "doctest.h"
#include "mi2das/errors.h"
#include "mi2das/experiments.h"
#include "oracles/reference_math.h"
#include "support/test_support.h"

using namespace mi2das;
using nlohmann::json;

namespace {

// Desk config shrunk further so a campaign takes well under a second.
ExperimentConfig tiny(Campaign c) {
  ExperimentConfig cfg = profile_config(c, "desk");
  // Layer 1 keeps the full desk size so the 100:1 contamination draws at
  // least one attack.
  if (c != Campaign::kLayer1) cfg.data.synthetic.samples_per_class = 60;
  cfg.replicates = 2;
  cfg.layer1.detectors = {json{{"kind", "gmm"}, {"nc", {1, 2}}}, json{{"kind", "lof"}, {"k", 10}}};
  cfg.layer1.th_per = {1.0, 5.0};
  cfg.layer1.test_sizes = {20, 40};
  cfg.layer1.top_k = 2;
  cfg.layer2.n_known = {1, 13};
  cfg.layer2.limit = 2;
  cfg.layer2.detectors = {json{{"kind", "gmm"}, {"nc", 1}}};
  cfg.acm.scenarios = {{4, 2}, {13, 1}};
  cfg.acm.classifiers = {json{{"kind", "knn"}, {"k", 3}},
                         json{{"kind", "random_forest"}, {"n_trees", 10}, {"threads", 1}}};
  cfg.incremental.n_known = {4};
  cfg.incremental.strategies = {UpdateStrategy::kSelfTraining, UpdateStrategy::kActiveLearning};
  cfg.incremental.schedule = {{4, 10}, {10, 4}, {14, 0}};
  cfg.incremental.update = {{"classifier", {{"kind", "random_forest"}, {"n_trees", 10}, {"threads", 1}}},
                            {"al_budget", 40},
                            {"al_batch_size", 20},
                            {"seeds_per_class", 5},
                            {"max_rounds", 4}};
  cfg.validate();
  return cfg;
}

std::size_t csv_rows(const std::string& csv) {
  return static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
}

}  // namespace

TEST_CASE("grid expansion") {
  const auto g = expand_grid({{"kind", "gmm"}, {"nc", {1, 2, 3}}, {"cov_type", {"full", "diag"}}});
  CHECK(g.size() == 6);
  std::set<std::string> distinct;
  for (const auto& j : g) {
    CHECK(j.at("kind") == "gmm");
    CHECK(j.at("nc").is_number());
    distinct.insert(j.dump());
  }
  CHECK(distinct.size() == 6);
  CHECK(expand_grid({{"kind", "lof"}, {"k", 10}}).size() == 1);
  CHECK_THROWS_AS(expand_grid({{"kind", "lof"}, {"k", json::array()}}), InvalidArgument);
  CHECK_THROWS_AS(expand_grid(json::array()), InvalidArgument);

  const auto named = expand_classifiers({json{{"kind", "gbt"}, {"max_depth", {3, 6}}},
                                         json{{"name", "xgboost"}, {"kind", "gbt"}}});
  REQUIRE(named.size() == 3);
  CHECK(named[0].name == "gbt#0");
  CHECK(named[1].name == "gbt#1");
  CHECK(named[2].name == "xgboost");
  CHECK(expand_detectors({json{{"kind", "ocsvm"}, {"nu", {0.01, 0.05, 0.1}}}}).size() == 3);
}

TEST_CASE("combination counts") {
  // Full-scale ACM scenarios: 50 + 50 + 50 + 14.
  CHECK(acm_runs_per_classifier(AcmSettings{}) == 164);
  const auto full = profile_config(Campaign::kAcm, "full", "/nonexistent");
  CHECK(planned_runs(full) == 164 * 6);

  ExperimentConfig l2 = profile_config(Campaign::kLayer2Openset, "full", "/nonexistent");
  l2.layer2.limit.reset();
  l2.layer2.detectors = {json{{"kind", "lof"}, {"k", 20}}};
  CHECK(planned_runs(l2) == oracle::pascal(14, 1) + oracle::pascal(14, 4) + oracle::pascal(14, 7) +
                                oracle::pascal(14, 10) + oracle::pascal(14, 13));
  CHECK(planned_runs(l2) == 14 + 1001 + 3432 + 1001 + 14);

  const auto l1 = profile_config(Campaign::kLayer1, "full", "/nonexistent");
  CHECK(planned_runs(l1) == 2 * (6 + 4 + 3) * 4 * 2);
}

TEST_CASE("campaign run counts match the plan") {
  for (Campaign c : {Campaign::kLayer1, Campaign::kLayer2Openset, Campaign::kAcm,
                     Campaign::kIncrementalOneStep, Campaign::kIncrementalMultiStep}) {
    CAPTURE(to_string(c));
    const ExperimentConfig cfg = tiny(c);
    const CampaignReport r = run_campaign(cfg);
    CHECK(r.runs.size() == planned_runs(cfg));
    CHECK(r.campaign == to_string(c));
    CHECK(r.config_hash == config_hash(cfg));
    CHECK(r.dataset_hash.size() == 64);
    CHECK_FALSE(r.tables.empty());
    for (std::size_t i = 0; i < r.runs.size(); ++i) CHECK(r.runs[i].index == i);
    CHECK(r.aggregates == aggregate_runs(r.runs));
  }
}

TEST_CASE("layer-1 tables") {
  const ExperimentConfig cfg = tiny(Campaign::kLayer1);
  const CampaignReport r = run_layer1(cfg);
  REQUIRE(r.tables.count("layer1_all.csv") == 1);
  REQUIRE(r.tables.count("layer1_top.csv") == 1);
  CHECK(csv_rows(r.tables.at("layer1_all.csv")) == planned_runs(cfg));
  CHECK(csv_rows(r.tables.at("layer1_top.csv")) ==
        cfg.layer1.paradigms.size() * cfg.layer1.test_sizes.size() * cfg.layer1.top_k);
  CHECK(r.tables.at("layer1_all.csv").rfind("Setting,Test,Detector,Parameter,Acc.,TPR,FPR,Pr.", 0) == 0);
  for (const auto& run : r.runs) {
    CHECK(run.metrics.tpr.has_value());
    CHECK(run.metrics.fpr.has_value());
  }
}

TEST_CASE("acm table has one row per classifier") {
  const ExperimentConfig cfg = tiny(Campaign::kAcm);
  const CampaignReport r = run_acm(cfg);
  REQUIRE(r.tables.count("acm.csv") == 1);
  CHECK(csv_rows(r.tables.at("acm.csv")) == 2);
  CHECK(r.runs.size() == 3 * 2);
  for (const auto& run : r.runs) {
    REQUIRE(run.metrics.macro_f1.has_value());
    CHECK(*run.metrics.macro_f1 > 0.9);
  }
}

TEST_CASE("reports are deterministic and independent of thread count") {
  for (Campaign c : {Campaign::kLayer2Openset, Campaign::kAcm, Campaign::kIncrementalOneStep}) {
    CAPTURE(to_string(c));
    ExperimentConfig cfg = tiny(c);
    const std::string a = to_json(run_campaign(cfg)).dump();
    const std::string b = to_json(run_campaign(cfg)).dump();
    CHECK(a == b);
    cfg.threads = 2;
    CHECK(to_json(run_campaign(cfg)).dump() == a);
  }
}

TEST_CASE("seed changes the report") {
  ExperimentConfig cfg = tiny(Campaign::kAcm);
  const std::string a = to_json(run_campaign(cfg)).dump();
  cfg.seed_base = 1;
  CHECK(to_json(run_campaign(cfg)).dump() != a);
}

TEST_CASE("config hash ignores threads and output dir only") {
  ExperimentConfig cfg = tiny(Campaign::kAcm);
  const std::string h = config_hash(cfg);
  CHECK(h.size() == 64);
  ExperimentConfig other = cfg;
  other.threads = 4;
  other.output_dir = "/elsewhere";
  CHECK(config_hash(other) == h);
  other.seed_base = 9;
  CHECK(config_hash(other) != h);
  other = cfg;
  other.acm.scenarios[0].limit = 3;
  CHECK(config_hash(other) != h);
}

TEST_CASE("config json round trip and validation") {
  for (Campaign c : {Campaign::kLayer1, Campaign::kLayer2Openset, Campaign::kAcm,
                     Campaign::kIncrementalOneStep, Campaign::kIncrementalMultiStep}) {
    const ExperimentConfig cfg = tiny(c);
    const ExperimentConfig back = experiment_config_from_json(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK(config_hash(back) == config_hash(cfg));
  }
  CHECK_THROWS_AS(experiment_config_from_json({{"campaign", "acm"}, {"bogus", 1}}), InvalidArgument);
  CHECK_THROWS_AS(experiment_config_from_json({{"campaign", "nope"}}), InvalidArgument);
  CHECK_THROWS_AS(experiment_config_from_json(json::object()), InvalidArgument);
  ExperimentConfig bad = tiny(Campaign::kLayer2Openset);
  bad.layer2.n_known = {14};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS(profile_config(Campaign::kAcm, "laptop"), InvalidArgument);

  testing::TempDir dir("cfg");
  testing::write_file(dir / "c.json", to_json(tiny(Campaign::kAcm)).dump(2));
  CHECK(config_hash(load_experiment_config(dir / "c.json")) == config_hash(tiny(Campaign::kAcm)));
  testing::write_file(dir / "bad.json", "{ not json");
  CHECK_THROWS(load_experiment_config(dir / "bad.json"));
}

TEST_CASE("aggregation does not depend on run order") {
  CampaignReport r = run_campaign(tiny(Campaign::kAcm));
  const auto ref = aggregate_runs(r.runs);
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(r.runs.begin(), r.runs.end(), rng);
    CHECK(aggregate_runs(r.runs) == ref);
  }
}

TEST_CASE("five-number summary") {
  Rng rng(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (std::size_t n : {1u, 2u, 7u, 50u}) {
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    const auto s = five_number_summary(v);
    const double qs[5] = {0, 25, 50, 75, 100};
    for (int i = 0; i < 5; ++i) CHECK(s[i] == doctest::Approx(oracle::quantile_by_hand(v, qs[i])).epsilon(1e-12));
  }
  CHECK(five_number_summary({1, 2, 3, 4})[2] == 2.5);
  CHECK_THROWS_AS(five_number_summary({}), InvalidArgument);
}

TEST_CASE("write_report lays out its files") {
  const CampaignReport r = run_campaign(tiny(Campaign::kLayer2Openset));
  testing::TempDir dir("report");
  write_report(r, dir.path());
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "figures.json"));
  CHECK(std::filesystem::exists(dir.path() / "tables" / "layer2.csv"));
  const std::string runs = testing::read_file(dir / "runs.jsonl");
  CHECK(static_cast<std::size_t>(std::count(runs.begin(), runs.end(), '\n')) == r.runs.size());
  const json report = json::parse(testing::read_file(dir / "report.json"));
  CHECK(report == to_json(r));
  CHECK(report.at("provenance").at("config_hash") == r.config_hash);
  CHECK(testing::read_file(dir.path() / "tables" / "layer2.csv") == r.tables.at("layer2.csv"));
}

TEST_CASE("campaign names") {
  for (Campaign c : {Campaign::kLayer1, Campaign::kLayer2Openset, Campaign::kAcm,
                     Campaign::kIncrementalOneStep, Campaign::kIncrementalMultiStep}) {
    CHECK(parse_campaign(to_string(c)) == c);
  }
  CHECK_FALSE(parse_campaign("layer3").has_value());
}

TEST_CASE("shipped configs load and match their profiles") {
  const std::filesystem::path dir = std::filesystem::path(MI2DAS_SOURCE_DIR) / "config";
  std::size_t seen = 0;
  for (Campaign c : {Campaign::kLayer1, Campaign::kLayer2Openset, Campaign::kAcm,
                     Campaign::kIncrementalOneStep, Campaign::kIncrementalMultiStep}) {
    for (const char* profile : {"desk", "full"}) {
      const auto path = dir / (std::string(profile) + "_" + std::string(to_string(c)) + ".json");
      CAPTURE(path.string());
      REQUIRE(std::filesystem::exists(path));
      CHECK(config_hash(load_experiment_config(path)) ==
            config_hash(profile_config(c, profile, "data/edge-iiotset")));
      ++seen;
    }
  }
  CHECK(seen == 10);
}

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

#ifndef MI2DAS_EXPERIMENTS_H_
#define MI2DAS_EXPERIMENTS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mi2das/classifiers.h"
#include "mi2das/dataset.h"
#include "mi2das/detectors.h"
#include "mi2das/incremental.h"
#include "mi2das/metrics.h"
#include "mi2das/pooling.h"

namespace mi2das {

inline constexpr std::string_view kCodeVersion = "0.1.0";

enum class Campaign { kLayer1, kLayer2Openset, kAcm, kIncrementalOneStep, kIncrementalMultiStep };

std::string_view to_string(Campaign c);
std::optional<Campaign> parse_campaign(std::string_view text);

// Expands every array-valued field of `j` (other than "kind") into the
// cartesian product of single-valued objects, keys in sorted order.
std::vector<nlohmann::json> expand_grid(const nlohmann::json& j);

struct NamedClassifier {
  std::string name;
  ClassifierHyper hyper;
};

// Grid specs expanded in order; duplicate classifier names get a "#i"
// suffix.
std::vector<DetectorHyper> expand_detectors(const std::vector<nlohmann::json>& specs);
std::vector<NamedClassifier> expand_classifiers(const std::vector<nlohmann::json>& specs);

struct DataSource {
  enum class Kind { kSynthetic, kOfficial } kind = Kind::kSynthetic;
  SyntheticConfig synthetic;
  std::filesystem::path dir;               // official CSV directory
  std::optional<std::filesystem::path> schema;  // default: built-in schema
};

// Built-in column schema for the Edge-IIoTset ML CSVs.
ColumnSchema edge_iiotset_schema();

// Official files preprocessed with encoders and scaler fitted on the
// training partition.
Dataset load_official_dataset(const std::filesystem::path& dir, const ColumnSchema& schema);
// Encodes a loaded official split with encoders fitted on its train rows.
Dataset encode_official(const RawTable& raw, const ColumnSchema& schema);

struct PreparedData {
  Dataset train;
  Dataset test;
  std::string fingerprint;  // of the full preprocessed dataset
};

PreparedData prepare_data(const DataSource& source, const SplitSpec& split);

struct Layer1Settings {
  std::vector<Layer1Mode> paradigms{Layer1Mode::kNovelty, Layer1Mode::kOutlier};
  ContaminationRatio contamination;
  std::vector<nlohmann::json> detectors;  // grid specs
  std::vector<double> th_per{1.0, 2.5, 5.0, 10.0};
  std::vector<std::size_t> test_sizes{1000, 5000};
  std::size_t top_k = 3;
};

struct Layer2Settings {
  std::vector<int> n_known{1, 4, 7, 10, 13};
  std::optional<std::size_t> limit;
  // Per-class cap on fitting and evaluation records, drawn uniformly.
  std::optional<std::size_t> max_per_class;
  std::vector<nlohmann::json> detectors;
  double th_per = 5.0;
};

struct AcmScenario {
  int n_known = 4;
  std::optional<std::size_t> limit;
};

struct AcmSettings {
  std::vector<AcmScenario> scenarios{{4, 50}, {7, 50}, {10, 50}, {13, std::nullopt}};
  std::vector<nlohmann::json> classifiers;  // grid specs, optional "name"
  std::optional<std::size_t> max_train_per_class;
};

struct IncrementalSettings {
  std::vector<int> n_known{4, 7, 10, 13};
  std::vector<UpdateStrategy> strategies{
      UpdateStrategy::kSelfTraining, UpdateStrategy::kLabelSpreading,
      UpdateStrategy::kLabelPropagation, UpdateStrategy::kActiveLearning};
  std::vector<TrainingLogic> logics{TrainingLogic::kSeedBased, TrainingLogic::kAugmentation};
  Schedule schedule{{4, 10}, {7, 7}, {10, 4}, {13, 1}, {14, 0}};
  nlohmann::json update = nlohmann::json::object();  // UpdateConfig overrides
};

struct ExperimentConfig {
  Campaign campaign = Campaign::kLayer1;
  DataSource data;
  SplitSpec split;
  std::uint64_t seed_base = 0;
  int replicates = 5;
  int threads = 1;
  std::filesystem::path output_dir;
  Layer1Settings layer1;
  Layer2Settings layer2;
  AcmSettings acm;
  IncrementalSettings incremental;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
std::string config_hash(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Normalized form. Its SHA-256 without "threads" and "output_dir" (which do
// not affect results) is the config hash.
nlohmann::json to_json(const ExperimentConfig& cfg);

// Ready-made configs: "desk" (synthetic, reduced grids) or "full"
// (official CSVs in `dataset_dir`, published-scale grids).
ExperimentConfig profile_config(Campaign campaign, std::string_view profile,
                                const std::filesystem::path& dataset_dir = {});

struct RunRecord {
  std::size_t index = 0;
  std::string group;          // aggregation key, e.g. "random_forest/4K"
  nlohmann::json descriptor;  // what was run
  MetricBlock metrics;
  nlohmann::json extra = nlohmann::json::object();
};

struct CampaignReport {
  std::string campaign;
  nlohmann::json config;
  std::string config_hash;
  std::string dataset_hash;
  std::string code_version{kCodeVersion};
  std::vector<RunRecord> runs;
  // group -> metric -> aggregate
  std::map<std::string, std::map<std::string, AggregateValue>> aggregates;
  std::map<std::string, std::string> tables;  // file name -> CSV
  nlohmann::json figures = nlohmann::json::object();
};

// Number of runs a campaign performs, from config arithmetic alone.
std::size_t planned_runs(const ExperimentConfig& cfg);
// ACM combinations per classifier.
std::size_t acm_runs_per_classifier(const AcmSettings& acm);

CampaignReport run_layer1(const ExperimentConfig& cfg);
CampaignReport run_layer2(const ExperimentConfig& cfg);
CampaignReport run_acm(const ExperimentConfig& cfg);
CampaignReport run_incremental(const ExperimentConfig& cfg);
CampaignReport run_campaign(const ExperimentConfig& cfg);

// Aggregates per group; the result does not depend on run order.
std::map<std::string, std::map<std::string, AggregateValue>> aggregate_runs(
    const std::vector<RunRecord>& runs);

// Five-number summary (min, q1, median, q3, max) with linear interpolation.
std::array<double, 5> five_number_summary(std::vector<double> values);

// Canonical report JSON: no timing, fixed key order.
nlohmann::json to_json(const CampaignReport& report);
// Writes report.json, runs.jsonl, tables/*.csv and figures.json.
void write_report(const CampaignReport& report, const std::filesystem::path& dir);

}  // namespace mi2das

#endif  // MI2DAS_EXPERIMENTS_H_

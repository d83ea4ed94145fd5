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

#ifndef MI2DAS_POOLING_H_
#define MI2DAS_POOLING_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mi2das/dataset.h"
#include "mi2das/detectors.h"
#include "mi2das/labels.h"

namespace mi2das {

enum class Layer1Mode { kNovelty, kOutlier };

// normal:attack, e.g. 100:1.
struct ContaminationRatio {
  std::uint64_t normal = 100;
  std::uint64_t attack = 1;
};

struct Layer1TrainConfig {
  Layer1Mode mode = Layer1Mode::kNovelty;
  ContaminationRatio contamination;  // ignored in novelty mode
  DetectorHyper detector = GmmHyper{};
  double th_per = 5.0;
  std::uint64_t seed = 0;  // attack subsampling in outlier mode
};

// Known/unknown split of the fourteen attack classes; both lists are kept
// in taxonomy order.
class PartitionSpec {
 public:
  // Throws InvalidArgument unless `known` holds distinct attack classes.
  explicit PartitionSpec(std::vector<ClassLabel> known);

  const std::vector<ClassLabel>& known() const { return known_; }
  const std::vector<ClassLabel>& unknown() const { return unknown_; }
  bool is_known(ClassLabel label) const;

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;

 private:
  std::vector<ClassLabel> known_;
  std::vector<ClassLabel> unknown_;
};

enum class Pool { kNormal, kKnownAttack, kUnknown };

std::string_view to_string(Pool pool);

struct PoolAssignment {
  Pool pool = Pool::kNormal;
  double layer1_score = 0.0;
  std::optional<double> layer2_score;  // set iff pool != kNormal
};

// Training data the Layer-1 detector is fitted on: Normal records, plus in
// outlier mode floor(n_normal * attack / normal) attack records drawn
// uniformly without replacement.
Dataset layer1_fitting_set(const Dataset& train, const Layer1TrainConfig& cfg);

DetectorModel train_layer1(const Dataset& train, const Layer1TrainConfig& cfg);

// Novelty detector over the known-attack records of `attack_train`,
// calibrated on those same records.
DetectorModel train_layer2(const Dataset& attack_train, const PartitionSpec& part,
                           const DetectorHyper& hyper, double th_per);

PoolAssignment route(std::span<const double> x, const DetectorModel& l1,
                     const DetectorModel& l2);
PoolAssignment route(const FlowRecord& flow, const DetectorModel& l1,
                     const DetectorModel& l2);

std::uint64_t binomial(int n, int k);

// All C(14, n_known) partitions in lexicographic order of the known set, or
// `limit` of them drawn uniformly without replacement (still in
// lexicographic order).
std::vector<PartitionSpec> enumerate_partitions(int n_known,
                                                std::optional<std::size_t> limit = {},
                                                std::uint64_t seed = 0);

nlohmann::json to_json(const PartitionSpec& part);
PartitionSpec partition_from_json(const nlohmann::json& j);

// One JSON-lines audit record.
nlohmann::json audit_record(std::uint64_t id, const PoolAssignment& a);

}  // namespace mi2das

#endif  // MI2DAS_POOLING_H_

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

#include "mi2das/pooling.h"

#include <algorithm>
#include <limits>

#include "mi2das/errors.h"
#include "mi2das/rng.h"

namespace mi2das {

PartitionSpec::PartitionSpec(std::vector<ClassLabel> known) : known_(std::move(known)) {
  for (ClassLabel c : known_) {
    if (!is_attack(c)) {
      throw InvalidArgument("partition may only contain attack classes, got " +
                            std::string(to_string(c)));
    }
  }
  std::sort(known_.begin(), known_.end());
  if (std::adjacent_find(known_.begin(), known_.end()) != known_.end()) {
    throw InvalidArgument("partition lists a known class twice");
  }
  for (ClassLabel c : attack_classes()) {
    if (!std::binary_search(known_.begin(), known_.end(), c)) unknown_.push_back(c);
  }
}

bool PartitionSpec::is_known(ClassLabel label) const {
  return std::binary_search(known_.begin(), known_.end(), label);
}

std::string_view to_string(Pool pool) {
  switch (pool) {
    case Pool::kNormal: return "normal";
    case Pool::kKnownAttack: return "known_attack";
    case Pool::kUnknown: return "unknown";
  }
  return "?";
}

Dataset layer1_fitting_set(const Dataset& train, const Layer1TrainConfig& cfg) {
  std::vector<std::size_t> normal;
  std::vector<std::size_t> attack;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& label = train.records[i].label;
    if (!label) throw DataError("Layer-1 training requires labeled records");
    (*label == ClassLabel::kNormal ? normal : attack).push_back(i);
  }
  if (normal.empty()) throw InvalidArgument("Layer-1 training set has no Normal samples");
  if (cfg.mode == Layer1Mode::kOutlier) {
    if (cfg.contamination.normal == 0 || cfg.contamination.attack == 0) {
      throw InvalidArgument("contamination ratio terms must be positive");
    }
    const std::uint64_t want = normal.size() * cfg.contamination.attack / cfg.contamination.normal;
    if (want == 0 || want > attack.size()) {
      throw InvalidArgument("contamination ratio " + std::to_string(cfg.contamination.normal) +
                            ":" + std::to_string(cfg.contamination.attack) + " needs " +
                            std::to_string(want) + " attack samples for " +
                            std::to_string(normal.size()) + " normal, " +
                            std::to_string(attack.size()) + " available");
    }
    Rng rng(cfg.seed);
    for (std::size_t p : sample_without_replacement(attack.size(), want, rng)) {
      normal.push_back(attack[p]);
    }
    std::sort(normal.begin(), normal.end());
  }
  return train.subset(normal);
}

DetectorModel train_layer1(const Dataset& train, const Layer1TrainConfig& cfg) {
  const Dataset fit = layer1_fitting_set(train, cfg);
  const Matrix x = fit.features();
  return calibrate_threshold(fit_detector(x, cfg.detector), x, cfg.th_per);
}

DetectorModel train_layer2(const Dataset& attack_train, const PartitionSpec& part,
                           const DetectorHyper& hyper, double th_per) {
  const Dataset known = attack_train.filter(
      [&](const FlowRecord& r) { return r.label && part.is_known(*r.label); });
  if (known.empty()) throw InvalidArgument("Layer-2 training set has no known-attack samples");
  const Matrix x = known.features();
  return calibrate_threshold(fit_detector(x, hyper), x, th_per);
}

PoolAssignment route(std::span<const double> x, const DetectorModel& l1,
                     const DetectorModel& l2) {
  if (!l1.threshold() || !l2.threshold()) {
    throw std::logic_error("routing requires calibrated detectors");
  }
  PoolAssignment a;
  a.layer1_score = l1.score(x);
  if (!(a.layer1_score < *l1.threshold())) return a;
  a.layer2_score = l2.score(x);
  a.pool = *a.layer2_score < *l2.threshold() ? Pool::kUnknown : Pool::kKnownAttack;
  return a;
}

PoolAssignment route(const FlowRecord& flow, const DetectorModel& l1, const DetectorModel& l2) {
  return route(flow.features, l1, l2);
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
  return r;
}

namespace {

// r-th k-subset of {0..n-1} in lexicographic order.
std::vector<int> unrank_combination(int n, int k, std::uint64_t r) {
  std::vector<int> out;
  int next = 0;
  for (int slot = 0; slot < k; ++slot) {
    for (int v = next;; ++v) {
      const std::uint64_t below = binomial(n - v - 1, k - slot - 1);
      if (r < below) {
        out.push_back(v);
        next = v + 1;
        break;
      }
      r -= below;
    }
  }
  return out;
}

}  // namespace

std::vector<PartitionSpec> enumerate_partitions(int n_known, std::optional<std::size_t> limit,
                                                std::uint64_t seed) {
  if (n_known < 1 || n_known > kNumAttackClasses - 1) {
    throw InvalidArgument("n_known must be in [1, 13], got " + std::to_string(n_known));
  }
  const std::uint64_t total = binomial(kNumAttackClasses, n_known);
  std::vector<std::uint64_t> ranks;
  if (limit) {
    if (*limit > total) {
      throw InvalidArgument("limit " + std::to_string(*limit) + " exceeds the " +
                            std::to_string(total) + " partitions");
    }
    Rng rng(seed);
    for (std::size_t r : sample_without_replacement(total, *limit, rng)) ranks.push_back(r);
    std::sort(ranks.begin(), ranks.end());
  } else {
    ranks.resize(total);
    for (std::uint64_t r = 0; r < total; ++r) ranks[r] = r;
  }
  std::vector<PartitionSpec> out;
  out.reserve(ranks.size());
  const auto& attacks = attack_classes();
  for (std::uint64_t r : ranks) {
    std::vector<ClassLabel> known;
    for (int i : unrank_combination(kNumAttackClasses, n_known, r)) known.push_back(attacks[i]);
    out.emplace_back(std::move(known));
  }
  return out;
}

nlohmann::json to_json(const PartitionSpec& part) {
  return label_names(part.known());
}

PartitionSpec partition_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_object() ? j.at("known") : j;
  if (!arr.is_array()) throw InvalidArgument("partition must be an array of class names");
  std::vector<ClassLabel> known;
  for (const auto& name : arr) {
    const auto label = parse_ground_truth(name.get<std::string>());
    if (!label) throw InvalidArgument("unknown class '" + name.get<std::string>() + "'");
    known.push_back(*label);
  }
  return PartitionSpec(std::move(known));
}

nlohmann::json audit_record(std::uint64_t id, const PoolAssignment& a) {
  nlohmann::json j = {{"id", id}, {"pool", to_string(a.pool)}, {"layer1_score", a.layer1_score},
                      {"layer2_score", nullptr}};
  if (a.layer2_score) j["layer2_score"] = *a.layer2_score;
  return j;
}

}  // namespace mi2das

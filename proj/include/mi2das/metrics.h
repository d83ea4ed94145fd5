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

#ifndef MI2DAS_METRICS_H_
#define MI2DAS_METRICS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mi2das/labels.h"
#include "mi2das/pooling.h"

namespace mi2das {

// Rows are truth, columns prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> classes);

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }
  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * classes_.size() + pred];
  }
  void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1) {
    counts_[truth * classes_.size() + pred] += n;
  }
  std::uint64_t total() const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  nlohmann::json to_json() const;

 private:
  std::vector<std::string> classes_;
  std::vector<std::uint64_t> counts_;
};

// Throws InvalidArgument on empty or unequal inputs and on labels outside
// `classes`.
ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> pred,
                          std::vector<std::string> classes);
ConfusionMatrix confusion(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred,
                          const std::vector<ClassLabel>& classes);

inline constexpr std::string_view kBinaryNegative = "Normal";
inline constexpr std::string_view kBinaryPositive = "Attack";

// 2x2 matrix over {Normal, Attack}; Attack is the positive class.
ConfusionMatrix binary_confusion(const std::vector<bool>& truth_attack,
                                 const std::vector<bool>& pred_attack);

struct ClassMetrics {
  std::uint64_t support = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  // 2TP / (2TP + FP + FN): equals the harmonic mean of precision and recall
  // when both exist; undefined only when the class never occurs in truth or
  // prediction.
  std::optional<double> f1;
};

// Undefined values (zero denominators) stay empty.
struct MetricBlock {
  std::optional<double> accuracy;
  std::optional<double> tpr;
  std::optional<double> fpr;
  std::optional<double> precision;
  std::optional<double> macro_f1;
  std::optional<double> weighted_f1;
  std::optional<double> macro_accuracy;  // also reported as balanced_accuracy
  std::optional<double> micro_accuracy;
  std::optional<double> known_recall;
  std::optional<double> unknown_recall;
  std::map<std::string, ClassMetrics> per_class;
  // Classes with zero support, left out of the macro means.
  std::vector<std::string> excluded_classes;

  // Every scalar metric by name, including the balanced_accuracy alias.
  std::map<std::string, std::optional<double>> scalars() const;
};

MetricBlock binary_metrics(const ConfusionMatrix& cm);
MetricBlock multiclass_metrics(const ConfusionMatrix& cm);

struct OpensetRecall {
  std::optional<double> known_recall;
  std::optional<double> unknown_recall;
};

// truth_known[i] tells whether attack sample i belongs to a known class.
OpensetRecall openset_recall(const std::vector<bool>& truth_known,
                             std::span<const Pool> assignments);

struct AggregateValue {
  double mean = 0.0;
  double stddev = 0.0;  // n - 1 denominator
  std::size_t n = 0;
  std::size_t undefined = 0;  // blocks where the metric was undefined
  bool single = false;        // n == 1, stddev reported as 0

  bool operator==(const AggregateValue&) const = default;
};

// Mean and sample standard deviation per scalar metric over the defined
// values. Summation runs over sorted values so the result does not depend
// on block order.
std::map<std::string, AggregateValue> aggregate(std::span<const MetricBlock> blocks);

std::string format_mean_std(const AggregateValue& v, int digits = 4);

nlohmann::json to_json(const MetricBlock& block);
MetricBlock metric_block_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AggregateValue& v);

// RFC 4180 CSV text.
std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows);

// Fixed-precision rendering of an optional metric ("" when undefined).
std::string format_metric(const std::optional<double>& v, int digits = 4);

}  // namespace mi2das

#endif  // MI2DAS_METRICS_H_

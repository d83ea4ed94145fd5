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

#include "mi2das/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mi2das/errors.h"

namespace mi2das {
namespace {

std::optional<double> ratio(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> classes)
    : classes_(std::move(classes)), counts_(classes_.size() * classes_.size(), 0) {
  if (classes_.empty()) throw InvalidArgument("confusion matrix needs at least one class");
  std::vector<std::string> sorted = classes_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("confusion matrix classes must be distinct");
  }
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::optional<std::size_t> ConfusionMatrix::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == name) return i;
  }
  return std::nullopt;
}

nlohmann::json ConfusionMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < size(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (std::size_t j = 0; j < size(); ++j) r.push_back(at(i, j));
    rows.push_back(std::move(r));
  }
  return {{"classes", classes_}, {"counts", std::move(rows)}};
}

ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> pred,
                          std::vector<std::string> classes) {
  if (truth.empty()) throw InvalidArgument("confusion of empty inputs");
  if (truth.size() != pred.size()) throw InvalidArgument("truth and prediction lengths differ");
  ConfusionMatrix cm(std::move(classes));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = cm.index_of(truth[i]);
    const auto p = cm.index_of(pred[i]);
    if (!t || !p) {
      throw InvalidArgument("label '" + (t ? pred[i] : truth[i]) + "' is not in the class list");
    }
    cm.add(*t, *p);
  }
  return cm;
}

ConfusionMatrix confusion(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred,
                          const std::vector<ClassLabel>& classes) {
  std::vector<std::string> t, p;
  for (ClassLabel l : truth) t.emplace_back(to_string(l));
  for (ClassLabel l : pred) p.emplace_back(to_string(l));
  return confusion(t, p, label_names(classes));
}

ConfusionMatrix binary_confusion(const std::vector<bool>& truth_attack,
                                 const std::vector<bool>& pred_attack) {
  if (truth_attack.empty()) throw InvalidArgument("confusion of empty inputs");
  if (truth_attack.size() != pred_attack.size()) {
    throw InvalidArgument("truth and prediction lengths differ");
  }
  ConfusionMatrix cm({std::string(kBinaryNegative), std::string(kBinaryPositive)});
  for (std::size_t i = 0; i < truth_attack.size(); ++i) {
    cm.add(truth_attack[i] ? 1 : 0, pred_attack[i] ? 1 : 0);
  }
  return cm;
}

std::map<std::string, std::optional<double>> MetricBlock::scalars() const {
  return {{"accuracy", accuracy},
          {"tpr", tpr},
          {"fpr", fpr},
          {"precision", precision},
          {"macro_f1", macro_f1},
          {"weighted_f1", weighted_f1},
          {"macro_accuracy", macro_accuracy},
          {"balanced_accuracy", macro_accuracy},
          {"micro_accuracy", micro_accuracy},
          {"known_recall", known_recall},
          {"unknown_recall", unknown_recall}};
}

MetricBlock binary_metrics(const ConfusionMatrix& cm) {
  if (cm.size() != 2) throw InvalidArgument("binary metrics need a 2x2 confusion matrix");
  const auto tn = static_cast<double>(cm.at(0, 0));
  const auto fp = static_cast<double>(cm.at(0, 1));
  const auto fn = static_cast<double>(cm.at(1, 0));
  const auto tp = static_cast<double>(cm.at(1, 1));
  MetricBlock b;
  b.tpr = ratio(tp, tp + fn);
  b.fpr = ratio(fp, fp + tn);
  b.precision = ratio(tp, tp + fp);
  b.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  return b;
}

MetricBlock multiclass_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.size();
  MetricBlock b;
  double trace = 0.0;
  double total = 0.0;
  std::vector<ClassMetrics> per(k);
  for (std::size_t c = 0; c < k; ++c) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row += static_cast<double>(cm.at(c, j));
      col += static_cast<double>(cm.at(j, c));
    }
    const auto tp = static_cast<double>(cm.at(c, c));
    trace += tp;
    total += row;
    per[c].support = static_cast<std::uint64_t>(row);
    per[c].recall = ratio(tp, row);
    per[c].precision = ratio(tp, col);
    per[c].f1 = ratio(2.0 * tp, row + col);
  }
  b.micro_accuracy = ratio(trace, total);
  b.accuracy = b.micro_accuracy;
  double f1_sum = 0.0, recall_sum = 0.0, weighted = 0.0, support = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < k; ++c) {
    b.per_class[cm.classes()[c]] = per[c];
    if (per[c].support == 0) {
      b.excluded_classes.push_back(cm.classes()[c]);
      continue;
    }
    ++counted;
    f1_sum += *per[c].f1;
    recall_sum += *per[c].recall;
    weighted += static_cast<double>(per[c].support) * *per[c].f1;
    support += static_cast<double>(per[c].support);
  }
  if (counted > 0) {
    b.macro_f1 = f1_sum / static_cast<double>(counted);
    b.macro_accuracy = recall_sum / static_cast<double>(counted);
    b.weighted_f1 = weighted / support;
  }
  return b;
}

OpensetRecall openset_recall(const std::vector<bool>& truth_known,
                             std::span<const Pool> assignments) {
  if (truth_known.size() != assignments.size()) {
    throw InvalidArgument("truth flags and pool assignments differ in length");
  }
  double known = 0.0, known_hit = 0.0, unknown = 0.0, unknown_hit = 0.0;
  for (std::size_t i = 0; i < truth_known.size(); ++i) {
    if (truth_known[i]) {
      known += 1.0;
      if (assignments[i] == Pool::kKnownAttack) known_hit += 1.0;
    } else {
      unknown += 1.0;
      if (assignments[i] == Pool::kUnknown) unknown_hit += 1.0;
    }
  }
  return {ratio(known_hit, known), ratio(unknown_hit, unknown)};
}

std::map<std::string, AggregateValue> aggregate(std::span<const MetricBlock> blocks) {
  if (blocks.empty()) throw InvalidArgument("aggregate needs at least one block");
  std::map<std::string, std::vector<double>> values;
  std::map<std::string, std::size_t> undefined;
  for (const auto& b : blocks) {
    for (const auto& [name, v] : b.scalars()) {
      if (v) {
        values[name].push_back(*v);
      } else {
        ++undefined[name];
        values.try_emplace(name);
      }
    }
  }
  std::map<std::string, AggregateValue> out;
  for (auto& [name, vs] : values) {
    if (vs.empty()) continue;
    std::sort(vs.begin(), vs.end());
    AggregateValue a;
    a.n = vs.size();
    a.undefined = undefined[name];
    double s = 0.0;
    for (double v : vs) s += v;
    a.mean = s / static_cast<double>(a.n);
    if (a.n == 1) {
      a.single = true;
    } else {
      std::vector<double> sq;
      sq.reserve(a.n);
      for (double v : vs) sq.push_back((v - a.mean) * (v - a.mean));
      std::sort(sq.begin(), sq.end());
      double ss = 0.0;
      for (double v : sq) ss += v;
      a.stddev = std::sqrt(ss / static_cast<double>(a.n - 1));
    }
    out[name] = a;
  }
  return out;
}

std::string format_metric(const std::optional<double>& v, int digits) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, *v);
  return buf;
}

std::string format_mean_std(const AggregateValue& v, int digits) {
  return format_metric(v.mean, digits) + " ± " + format_metric(v.stddev, digits);
}

nlohmann::json to_json(const MetricBlock& block) {
  nlohmann::json j;
  for (const auto& [name, v] : block.scalars()) j[name] = opt(v);
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, m] : block.per_class) {
    per[name] = {{"support", m.support},
                 {"precision", opt(m.precision)},
                 {"recall", opt(m.recall)},
                 {"f1", opt(m.f1)}};
  }
  j["per_class"] = std::move(per);
  j["excluded_classes"] = block.excluded_classes;
  return j;
}

MetricBlock metric_block_from_json(const nlohmann::json& j) {
  MetricBlock b;
  b.accuracy = opt_from(j, "accuracy");
  b.tpr = opt_from(j, "tpr");
  b.fpr = opt_from(j, "fpr");
  b.precision = opt_from(j, "precision");
  b.macro_f1 = opt_from(j, "macro_f1");
  b.weighted_f1 = opt_from(j, "weighted_f1");
  b.macro_accuracy = opt_from(j, "macro_accuracy");
  b.micro_accuracy = opt_from(j, "micro_accuracy");
  b.known_recall = opt_from(j, "known_recall");
  b.unknown_recall = opt_from(j, "unknown_recall");
  if (j.contains("per_class")) {
    for (const auto& [name, m] : j["per_class"].items()) {
      b.per_class[name] = {m.at("support").get<std::uint64_t>(), opt_from(m, "precision"),
                           opt_from(m, "recall"), opt_from(m, "f1")};
    }
  }
  if (j.contains("excluded_classes")) {
    b.excluded_classes = j["excluded_classes"].get<std::vector<std::string>>();
  }
  return b;
}

nlohmann::json to_json(const AggregateValue& v) {
  return {{"mean", v.mean}, {"stddev", v.stddev}, {"n", v.n}, {"undefined", v.undefined},
          {"single", v.single}};
}

std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows) {
  auto cell = [](const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  };
  std::string out;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i > 0) out += ',';
      out += cell(r[i]);
    }
    out += "\r\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

}  // namespace mi2das

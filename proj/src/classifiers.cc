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

#include "mi2das/classifiers.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "mi2das/errors.h"

namespace mi2das {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw InvalidArgument("unknown classifier hyperparameter '" + key + "'");
    }
  }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

std::string_view to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kKnn: return "knn";
    case ClassifierKind::kLogreg: return "logreg";
    case ClassifierKind::kSvm: return "svm";
    case ClassifierKind::kRandomForest: return "random_forest";
    case ClassifierKind::kGbt: return "gbt";
  }
  return "?";
}

std::optional<ClassifierKind> parse_classifier_kind(std::string_view text) {
  const std::string t = lower(text);
  if (t == "knn") return ClassifierKind::kKnn;
  if (t == "logreg" || t == "lr" || t == "logistic_regression") return ClassifierKind::kLogreg;
  if (t == "svm") return ClassifierKind::kSvm;
  if (t == "random_forest" || t == "rf") return ClassifierKind::kRandomForest;
  if (t == "gbt" || t == "xgboost" || t == "lightgbm") return ClassifierKind::kGbt;
  return std::nullopt;
}

ClassifierKind kind_of(const ClassifierHyper& hyper) {
  return static_cast<ClassifierKind>(hyper.index());
}

std::size_t argmax(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// KNN

KnnModel KnnModel::fit(const TrainingData& data, const KnnHyper& hyper) {
  if (hyper.k < 1) throw InvalidArgument("KNN k must be >= 1");
  if (data.x.rows() < static_cast<std::size_t>(hyper.k)) {
    throw InvalidArgument("KNN needs at least k training points");
  }
  KnnModel m;
  m.k_ = hyper.k;
  m.n_classes_ = data.n_classes;
  m.train_ = data.x;
  m.y_.assign(data.y.begin(), data.y.end());
  m.weight_.assign(data.weight.begin(), data.weight.end());
  return m;
}

std::vector<std::pair<double, std::size_t>> KnnModel::neighbors(
    std::span<const double> x, std::optional<std::size_t> exclude) const {
  std::vector<std::pair<double, std::size_t>> all;
  all.reserve(train_.rows());
  for (std::size_t i = 0; i < train_.rows(); ++i) {
    if (exclude && *exclude == i) continue;
    all.emplace_back(squared_distance(x, train_.row(i)), i);
  }
  const std::size_t k = std::min(all.size(), static_cast<std::size_t>(k_));
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  all.resize(k);
  return all;
}

std::vector<double> KnnModel::predict_proba(std::span<const double> x) const {
  std::vector<double> p(static_cast<std::size_t>(n_classes_), 0.0);
  double total = 0.0;
  for (const auto& [d, i] : neighbors(x)) {
    const double w = weight_.empty() ? 1.0 : weight_[i];
    p[static_cast<std::size_t>(y_[i])] += w;
    total += w;
  }
  for (double& v : p) v /= total;
  return p;
}

nlohmann::json KnnModel::to_json() const {
  return {{"k", k_},      {"n_classes", n_classes_}, {"rows", train_.rows()},
          {"cols", train_.cols()}, {"train", train_.data()}, {"y", y_},
          {"weight", weight_}};
}

KnnModel KnnModel::from_json(const nlohmann::json& j) {
  KnnModel m;
  m.k_ = j.at("k").get<int>();
  m.n_classes_ = j.at("n_classes").get<int>();
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto flat = j.at("train").get<std::vector<double>>();
  if (flat.size() != rows * cols) throw DataError("KNN payload is inconsistent");
  m.train_ = Matrix(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < cols; ++c) m.train_(i, c) = flat[i * cols + c];
  }
  m.y_ = j.at("y").get<std::vector<int>>();
  m.weight_ = j.at("weight").get<std::vector<double>>();
  return m;
}

// ---------------------------------------------------------------------------
// ClassifierModel

ClassifierModel::ClassifierModel(ClassifierHyper hyper, std::vector<ClassLabel> classes,
                                 Impl impl, std::uint64_t seed)
    : hyper_(std::move(hyper)), classes_(std::move(classes)), impl_(std::move(impl)), seed_(seed) {
  if (hyper_.index() != impl_.index()) {
    throw InvalidArgument("classifier hyperparameters do not match the fitted model");
  }
  for (ClassLabel c : classes_) {
    if (c == ClassLabel::kUnknown) throw InvalidArgument("classifier classes cannot hold Unknown");
  }
}

std::size_t ClassifierModel::dim() const {
  return std::visit([](const auto& m) { return m.dim(); }, impl_);
}

std::vector<double> ClassifierModel::predict_proba(std::span<const double> x) const {
  if (x.size() != dim()) {
    throw InvalidArgument("classifier expects " + std::to_string(dim()) + " features, got " +
                          std::to_string(x.size()));
  }
  return std::visit([&](const auto& m) { return m.predict_proba(x); }, impl_);
}

ClassLabel ClassifierModel::predict(std::span<const double> x) const {
  return classes_[argmax(predict_proba(x))];
}

ClassifierModel train_classifier(const Matrix& x, const std::vector<ClassLabel>& y,
                                 const ClassifierOptions& options) {
  if (x.rows() != y.size()) throw InvalidArgument("feature and label counts differ");
  const std::set<ClassLabel> distinct(y.begin(), y.end());
  if (distinct.count(ClassLabel::kUnknown) != 0) {
    throw InvalidArgument("training labels cannot include Unknown");
  }
  if (distinct.size() < 2) {
    throw InvalidArgument("classifier training needs at least two classes, got " +
                          std::to_string(distinct.size()));
  }
  std::vector<ClassLabel> classes(distinct.begin(), distinct.end());
  std::vector<int> yi(y.size());
  std::vector<double> weight;
  for (std::size_t i = 0; i < y.size(); ++i) {
    yi[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), y[i]) -
                             classes.begin());
  }
  if (!options.class_weight.empty()) {
    weight.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto it = options.class_weight.find(y[i]);
      weight[i] = it == options.class_weight.end() ? 1.0 : it->second;
      if (!(weight[i] > 0.0)) throw InvalidArgument("class weights must be > 0");
    }
  }
  const TrainingData data{x, yi, static_cast<int>(classes.size()), weight};
  ClassifierModel::Impl impl = std::visit(
      [&](const auto& h) -> ClassifierModel::Impl {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, KnnHyper>) {
          return KnnModel::fit(data, h);
        } else if constexpr (std::is_same_v<H, LogregHyper>) {
          return LogregModel::fit(data, h);
        } else if constexpr (std::is_same_v<H, SvmHyper>) {
          return SvmModel::fit(data, h, options.seed);
        } else if constexpr (std::is_same_v<H, ForestHyper>) {
          return RandomForestModel::fit(data, h, options.seed);
        } else {
          return GbtModel::fit(data, h);
        }
      },
      options.hyper);
  return ClassifierModel(options.hyper, std::move(classes), std::move(impl), options.seed);
}

ClassifierModel train_classifier(const Dataset& train, const ClassifierOptions& options,
                                 const std::optional<std::vector<ClassLabel>>& known) {
  const std::vector<ClassLabel> y = train.labels();
  if (known) {
    for (ClassLabel l : y) {
      if (std::find(known->begin(), known->end(), l) == known->end()) {
        throw InvalidArgument("label " + std::string(to_string(l)) +
                              " lies outside the declared known set");
      }
    }
  }
  return train_classifier(train.features(), y, options);
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json hyper_to_json(const ClassifierHyper& hyper) {
  return std::visit(
      [](const auto& h) -> nlohmann::json {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, KnnHyper>) {
          return {{"kind", "knn"}, {"k", h.k}};
        } else if constexpr (std::is_same_v<H, LogregHyper>) {
          return {{"kind", "logreg"}, {"l2", h.l2}, {"tol", h.tol}, {"max_iter", h.max_iter}};
        } else if constexpr (std::is_same_v<H, SvmHyper>) {
          nlohmann::json gamma = "scale";
          if (h.gamma) gamma = *h.gamma;
          nlohmann::json cap = nullptr;
          if (h.max_train) cap = *h.max_train;
          return {{"kind", "svm"},
                  {"kernel", h.kernel == KernelType::kRbf ? "rbf" : "linear"},
                  {"gamma", gamma},
                  {"c", h.c},
                  {"tol", h.tol},
                  {"max_iter", h.max_iter},
                  {"cache_mb", h.cache_mb},
                  {"max_train", cap}};
        } else if constexpr (std::is_same_v<H, ForestHyper>) {
          nlohmann::json mf = nullptr, md = nullptr;
          if (h.max_features) mf = *h.max_features;
          if (h.max_depth) md = *h.max_depth;
          return {{"kind", "random_forest"}, {"n_trees", h.n_trees},
                  {"max_features", mf},      {"max_depth", md},
                  {"min_samples_leaf", h.min_samples_leaf},
                  {"bootstrap", h.bootstrap}};
        } else {
          return {{"kind", "gbt"},
                  {"n_rounds", h.n_rounds},
                  {"max_depth", h.max_depth},
                  {"learning_rate", h.learning_rate},
                  {"lambda", h.lambda},
                  {"min_child_weight", h.min_child_weight}};
        }
      },
      hyper);
}

ClassifierHyper classifier_hyper_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) {
    throw InvalidArgument("classifier hyperparameters need a 'kind'");
  }
  const std::string name = j.at("kind").get<std::string>();
  const auto kind = parse_classifier_kind(name);
  if (!kind) throw InvalidArgument("unknown classifier kind '" + name + "'");
  switch (*kind) {
    case ClassifierKind::kKnn: {
      reject_unknown_keys(j, {"kind", "k"});
      KnnHyper h;
      h.k = j.value("k", h.k);
      return h;
    }
    case ClassifierKind::kLogreg: {
      reject_unknown_keys(j, {"kind", "l2", "tol", "max_iter"});
      LogregHyper h;
      h.l2 = j.value("l2", h.l2);
      h.tol = j.value("tol", h.tol);
      h.max_iter = j.value("max_iter", h.max_iter);
      return h;
    }
    case ClassifierKind::kSvm: {
      reject_unknown_keys(j, {"kind", "kernel", "gamma", "c", "tol", "max_iter", "cache_mb",
                              "max_train"});
      SvmHyper h;
      const std::string kernel = lower(j.value("kernel", std::string("rbf")));
      if (kernel == "linear") {
        h.kernel = KernelType::kLinear;
      } else if (kernel != "rbf") {
        throw InvalidArgument("unknown SVM kernel '" + kernel + "'");
      }
      if (j.contains("gamma") && j["gamma"].is_number()) h.gamma = j["gamma"].get<double>();
      h.c = j.value("c", h.c);
      h.tol = j.value("tol", h.tol);
      h.max_iter = j.value("max_iter", h.max_iter);
      h.cache_mb = j.value("cache_mb", h.cache_mb);
      h.max_train = optional_field<std::size_t>(j, "max_train");
      return h;
    }
    case ClassifierKind::kRandomForest: {
      reject_unknown_keys(j, {"kind", "n_trees", "max_features", "max_depth", "min_samples_leaf",
                              "bootstrap", "threads"});
      ForestHyper h;
      h.n_trees = j.value("n_trees", h.n_trees);
      h.max_features = optional_field<int>(j, "max_features");
      h.max_depth = optional_field<int>(j, "max_depth");
      h.min_samples_leaf = j.value("min_samples_leaf", h.min_samples_leaf);
      h.bootstrap = j.value("bootstrap", h.bootstrap);
      h.threads = j.value("threads", h.threads);
      return h;
    }
    case ClassifierKind::kGbt: {
      reject_unknown_keys(j, {"kind", "n_rounds", "max_depth", "learning_rate", "lambda",
                              "min_child_weight"});
      GbtHyper h;
      h.n_rounds = j.value("n_rounds", h.n_rounds);
      h.max_depth = j.value("max_depth", h.max_depth);
      h.learning_rate = j.value("learning_rate", h.learning_rate);
      h.lambda = j.value("lambda", h.lambda);
      h.min_child_weight = j.value("min_child_weight", h.min_child_weight);
      return h;
    }
  }
  throw InvalidArgument("unknown classifier kind '" + name + "'");
}

nlohmann::json to_json(const ClassifierModel& model) {
  return {{"format", "mi2das.classifier"},
          {"version", 1},
          {"kind", to_string(model.kind())},
          {"hyper", hyper_to_json(model.hyper())},
          {"classes", label_names(model.classes())},
          {"seed", model.seed()},
          {"params", std::visit([](const auto& m) { return m.to_json(); }, model.impl())}};
}

ClassifierModel classifier_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "mi2das.classifier") {
    throw DataError("not a serialized classifier");
  }
  if (j.value("version", 0) != 1) throw DataError("unsupported classifier version");
  ClassifierHyper hyper = classifier_hyper_from_json(j.at("hyper"));
  std::vector<ClassLabel> classes;
  for (const auto& name : j.at("classes")) {
    const auto label = parse_ground_truth(name.get<std::string>());
    if (!label) throw DataError("unknown class '" + name.get<std::string>() + "'");
    classes.push_back(*label);
  }
  const auto& p = j.at("params");
  ClassifierModel::Impl impl = [&]() -> ClassifierModel::Impl {
    switch (kind_of(hyper)) {
      case ClassifierKind::kKnn: return KnnModel::from_json(p);
      case ClassifierKind::kLogreg: return LogregModel::from_json(p);
      case ClassifierKind::kSvm: return SvmModel::from_json(p);
      case ClassifierKind::kRandomForest: return RandomForestModel::from_json(p);
      case ClassifierKind::kGbt: return GbtModel::from_json(p);
    }
    throw DataError("unknown classifier kind");
  }();
  return ClassifierModel(std::move(hyper), std::move(classes), std::move(impl),
                         j.at("seed").get<std::uint64_t>());
}

}  // namespace mi2das

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

#ifndef MI2DAS_CLASSIFIERS_H_
#define MI2DAS_CLASSIFIERS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mi2das/dataset.h"
#include "mi2das/labels.h"
#include "mi2das/matrix.h"
#include "mi2das/rng.h"
#include "mi2das/smo.h"

namespace mi2das {

enum class ClassifierKind { kKnn, kLogreg, kSvm, kRandomForest, kGbt };

std::string_view to_string(ClassifierKind kind);
std::optional<ClassifierKind> parse_classifier_kind(std::string_view text);

struct KnnHyper {
  int k = 5;
};

struct LogregHyper {
  // Objective: weighted mean cross-entropy + l2/2 * ||W||^2 (bias unpenalized).
  double l2 = 1e-4;
  double tol = 1e-6;
  int max_iter = 500;
};

struct SvmHyper {
  KernelType kernel = KernelType::kRbf;
  std::optional<double> gamma;  // unset: scale_gamma(X)
  double c = 1.0;
  double tol = 1e-3;
  std::int64_t max_iter = 10'000'000;
  std::size_t cache_mb = 200;
  // Stratified cap on the training set size; unset trains on everything.
  std::optional<std::size_t> max_train;
};

struct ForestHyper {
  int n_trees = 200;
  std::optional<int> max_features;  // unset: floor(sqrt(dim))
  std::optional<int> max_depth;
  int min_samples_leaf = 1;
  bool bootstrap = true;
  int threads = 0;  // 0: hardware concurrency
};

struct GbtHyper {
  int n_rounds = 200;
  int max_depth = 6;
  double learning_rate = 0.1;
  double lambda = 1.0;
  double min_child_weight = 1e-3;
};

using ClassifierHyper = std::variant<KnnHyper, LogregHyper, SvmHyper, ForestHyper, GbtHyper>;

ClassifierKind kind_of(const ClassifierHyper& hyper);

// Training targets as indices into a class list, with optional per-sample
// weights (empty: all 1).
struct TrainingData {
  const Matrix& x;
  std::span<const int> y;
  int n_classes;
  std::span<const double> weight;
};

// ---------------------------------------------------------------------------

class KnnModel {
 public:
  static KnnModel fit(const TrainingData& data, const KnnHyper& hyper);

  // k nearest training rows as (squared distance, index), ties by index.
  std::vector<std::pair<double, std::size_t>> neighbors(
      std::span<const double> x, std::optional<std::size_t> exclude = {}) const;
  // Vote fractions among the k neighbours.
  std::vector<double> predict_proba(std::span<const double> x) const;

  std::size_t dim() const { return train_.cols(); }
  int k() const { return k_; }
  nlohmann::json to_json() const;
  static KnnModel from_json(const nlohmann::json& j);

 private:
  int k_ = 5;
  int n_classes_ = 0;
  Matrix train_;
  std::vector<int> y_;
  std::vector<double> weight_;
};

class LogregModel {
 public:
  static LogregModel fit(const TrainingData& data, const LogregHyper& hyper);

  // Parameters are laid out as K rows of (dim weights, bias).
  static double loss_and_gradient(std::span<const double> params, const TrainingData& data,
                                  double l2, std::vector<double>* grad);

  static LogregModel from_parameters(std::size_t dim, int n_classes,
                                     std::vector<double> params);

  std::vector<double> predict_proba(std::span<const double> x) const;
  std::size_t dim() const { return dim_; }
  const std::vector<double>& parameters() const { return params_; }
  int iterations() const { return iterations_; }
  nlohmann::json to_json() const;
  static LogregModel from_json(const nlohmann::json& j);

 private:
  std::size_t dim_ = 0;
  int n_classes_ = 0;
  std::vector<double> params_;
  int iterations_ = 0;
};

class SvmModel {
 public:
  static SvmModel fit(const TrainingData& data, const SvmHyper& hyper, std::uint64_t seed);

  // One-vs-rest decision value per class.
  std::vector<double> decision(std::span<const double> x) const;
  // Softmax over decision values.
  std::vector<double> predict_proba(std::span<const double> x) const;
  std::size_t dim() const { return dim_; }
  nlohmann::json to_json() const;
  static SvmModel from_json(const nlohmann::json& j);

 private:
  struct Binary {
    Matrix support;
    std::vector<double> coef;  // y_i alpha_i
    double rho = 0.0;
  };
  std::size_t dim_ = 0;
  Kernel kernel_;
  std::vector<Binary> machines_;
};

// CART classification tree with Gini splits.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;  // go left iff x[feature] <= threshold
    int left = -1;
    int right = -1;
    std::vector<double> distribution;  // leaves only
  };

  struct Options {
    int max_features = 0;  // features tried per split; <= 0: all
    std::optional<int> max_depth;
    int min_samples_leaf = 1;
  };

  // `sample_weight` holds a non-negative weight per row (bootstrap counts
  // times class weights); rows with zero weight are ignored.
  static DecisionTree fit(const Matrix& x, std::span<const int> y, int n_classes,
                          std::span<const double> sample_weight, const Options& options,
                          Rng& rng);

  std::span<const double> predict_proba(std::span<const double> x) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);

 private:
  std::vector<Node> nodes_;
};

class RandomForestModel {
 public:
  // Tree t is grown from Rng(derive_seed(seed, t)).
  static RandomForestModel fit(const TrainingData& data, const ForestHyper& hyper,
                               std::uint64_t seed);

  std::vector<double> predict_proba(std::span<const double> x) const;
  const std::vector<DecisionTree>& trees() const { return trees_; }
  std::size_t dim() const { return dim_; }
  nlohmann::json to_json() const;
  static RandomForestModel from_json(const nlohmann::json& j);

 private:
  std::size_t dim_ = 0;
  int n_classes_ = 0;
  std::vector<DecisionTree> trees_;
};

// Regression tree on gradient/hessian statistics.
class GradientTree {
 public:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // -G / (H + lambda) at leaves
  };

  static GradientTree fit(const Matrix& x, std::span<const double> g,
                          std::span<const double> h, const GbtHyper& hyper);
  double predict(std::span<const double> x) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  nlohmann::json to_json() const;
  static GradientTree from_json(const nlohmann::json& j);

 private:
  std::vector<Node> nodes_;
};

class GbtModel {
 public:
  // Softmax cross-entropy boosting from a zero score: per round one tree
  // per class on g = p - y, h = p (1 - p).
  static GbtModel fit(const TrainingData& data, const GbtHyper& hyper);

  std::vector<double> raw_scores(std::span<const double> x) const;
  std::vector<double> predict_proba(std::span<const double> x) const;
  // rounds()[r][k] is the tree for class k fitted in round r.
  const std::vector<std::vector<GradientTree>>& rounds() const { return rounds_; }
  double learning_rate() const { return learning_rate_; }
  // Weighted mean training cross-entropy before round 1 and after each round.
  const std::vector<double>& loss_history() const { return loss_history_; }
  std::size_t dim() const { return dim_; }
  nlohmann::json to_json() const;
  static GbtModel from_json(const nlohmann::json& j);

 private:
  std::size_t dim_ = 0;
  int n_classes_ = 0;
  double learning_rate_ = 0.1;
  std::vector<std::vector<GradientTree>> rounds_;
  std::vector<double> loss_history_;
};

// ---------------------------------------------------------------------------

struct ClassifierOptions {
  ClassifierHyper hyper = ForestHyper{};
  std::uint64_t seed = 0;
  // Per-class sample weights; classes not listed weigh 1.
  std::map<ClassLabel, double> class_weight;
};

class ClassifierModel {
 public:
  using Impl = std::variant<KnnModel, LogregModel, SvmModel, RandomForestModel, GbtModel>;

  ClassifierModel(ClassifierHyper hyper, std::vector<ClassLabel> classes, Impl impl,
                  std::uint64_t seed);

  ClassifierKind kind() const { return kind_of(hyper_); }
  const ClassifierHyper& hyper() const { return hyper_; }
  const std::vector<ClassLabel>& classes() const { return classes_; }
  const Impl& impl() const { return impl_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t dim() const;

  // Distribution over classes(); throws InvalidArgument on width mismatch.
  std::vector<double> predict_proba(std::span<const double> x) const;
  // Argmax of predict_proba, ties to the lowest class index.
  ClassLabel predict(std::span<const double> x) const;

 private:
  ClassifierHyper hyper_;
  std::vector<ClassLabel> classes_;
  Impl impl_;
  std::uint64_t seed_;
};

// Classes are the sorted distinct labels of `train`. Throws InvalidArgument
// on fewer than two classes, on unlabeled records, or when a label lies
// outside `known` (if given).
ClassifierModel train_classifier(const Dataset& train, const ClassifierOptions& options,
                                 const std::optional<std::vector<ClassLabel>>& known = {});
ClassifierModel train_classifier(const Matrix& x, const std::vector<ClassLabel>& y,
                                 const ClassifierOptions& options);

std::size_t argmax(std::span<const double> p);

nlohmann::json hyper_to_json(const ClassifierHyper& hyper);
ClassifierHyper classifier_hyper_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ClassifierModel& model);
ClassifierModel classifier_from_json(const nlohmann::json& j);

}  // namespace mi2das

#endif  // MI2DAS_CLASSIFIERS_H_

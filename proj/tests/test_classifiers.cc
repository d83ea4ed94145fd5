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
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mi2das/classifiers.h"
#include "mi2das/errors.h"
#include "oracles/reference_math.h"
#include "support/test_support.h"

using namespace mi2das;

namespace {

struct Blobs {
  Matrix x;
  std::vector<int> y;
  std::vector<ClassLabel> labels;
};

const std::vector<ClassLabel> kThree{ClassLabel::kBackdoor, ClassLabel::kMitm, ClassLabel::kXss};

// Three well separated clusters in `dim` dimensions.
Blobs blobs(std::size_t per_class, std::size_t dim, std::uint64_t seed, double spread = 0.5) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  Blobs b;
  b.x = Matrix(3 * per_class, dim);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t r = c * per_class + i;
      for (std::size_t j = 0; j < dim; ++j) {
        b.x(r, j) = (j % 3 == c ? 4.0 : 0.0) + noise(rng);
      }
      b.y.push_back(static_cast<int>(c));
      b.labels.push_back(kThree[c]);
    }
  }
  return b;
}

std::vector<ClassifierHyper> small_hypers() {
  LogregHyper lr;
  lr.max_iter = 200;
  SvmHyper svm;
  svm.max_train = 150;
  ForestHyper rf;
  rf.n_trees = 15;
  rf.threads = 1;
  GbtHyper gbt;
  gbt.n_rounds = 15;
  gbt.max_depth = 3;
  return {KnnHyper{}, lr, svm, rf, gbt};
}

ClassifierOptions options_for(const ClassifierHyper& h, std::uint64_t seed = 3) {
  ClassifierOptions o;
  o.hyper = h;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_CASE("every classifier emits a distribution and learns separable blobs") {
  const Blobs train = blobs(60, 4, 1);
  const Blobs test = blobs(30, 4, 2);
  for (const auto& h : small_hypers()) {
    CAPTURE(to_string(kind_of(h)));
    const ClassifierModel m = train_classifier(train.x, train.labels, options_for(h));
    CHECK(m.classes() == kThree);
    CHECK(m.dim() == 4);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.x.rows(); ++i) {
      const auto p = m.predict_proba(test.x.row(i));
      REQUIRE(p.size() == 3);
      double s = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        s += v;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
      correct += m.predict(test.x.row(i)) == test.labels[i];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(test.x.rows()) >= 0.95);

    const std::vector<double> narrow(3, 0.0);
    CHECK_THROWS_AS(m.predict_proba(narrow), InvalidArgument);
  }
}

TEST_CASE("training is deterministic and survives a json round trip") {
  const Blobs train = blobs(40, 4, 5);
  const Blobs probe = blobs(10, 4, 6);
  for (const auto& h : small_hypers()) {
    CAPTURE(to_string(kind_of(h)));
    const ClassifierModel a = train_classifier(train.x, train.labels, options_for(h));
    const ClassifierModel b = train_classifier(train.x, train.labels, options_for(h));
    CHECK(to_json(a) == to_json(b));
    const ClassifierModel back = classifier_from_json(nlohmann::json::parse(to_json(a).dump()));
    CHECK(back.kind() == a.kind());
    for (std::size_t i = 0; i < probe.x.rows(); ++i) {
      CHECK(back.predict_proba(probe.x.row(i)) == a.predict_proba(probe.x.row(i)));
    }
  }
}

TEST_CASE("training rejects bad inputs") {
  const Blobs train = blobs(10, 2, 1);
  const std::vector<ClassLabel> one(train.labels.size(), ClassLabel::kXss);
  CHECK_THROWS_AS(train_classifier(train.x, one, options_for(KnnHyper{})), InvalidArgument);

  Dataset ds = testing::dataset_from(train.x, train.labels);
  const std::vector<ClassLabel> known{ClassLabel::kBackdoor, ClassLabel::kMitm};
  CHECK_THROWS_AS(train_classifier(ds, options_for(KnnHyper{}), known), InvalidArgument);
  ds.records[0].label.reset();
  CHECK_THROWS(train_classifier(ds, options_for(KnnHyper{})));
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  CHECK(argmax(std::vector<double>{0.1, 0.2, 0.7}) == 2);

  // All-zero logistic weights give a uniform distribution, so the first
  // class wins.
  const auto lr = LogregModel::from_parameters(2, 3, std::vector<double>(9, 0.0));
  const auto p = lr.predict_proba(std::vector<double>{1.0, -2.0});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  ClassifierModel m(LogregHyper{}, kThree, lr, 0);
  CHECK(m.predict(std::vector<double>{1.0, -2.0}) == ClassLabel::kBackdoor);
}

TEST_CASE("knn vote fractions") {
  Matrix x(4, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 0.1;
  x(2, 0) = 0.2;
  x(3, 0) = 10.0;
  const std::vector<int> y{0, 0, 1, 1};
  const KnnModel m = KnnModel::fit({x, y, 2, {}}, KnnHyper{.k = 3});
  const auto p = m.predict_proba(std::vector<double>{0.05});
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("1-nn matches brute force nearest neighbour") {
  Rng rng(8);
  const Matrix x = testing::random_matrix(80, 3, rng);
  std::vector<int> y(80);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 4);
  const KnnModel m = KnnModel::fit({x, y, 4, {}}, KnnHyper{.k = 1});
  const Matrix q = testing::random_matrix(50, 3, rng);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double d = 0.0;
      for (std::size_t j = 0; j < 3; ++j) d += (x(r, j) - q(i, j)) * (x(r, j) - q(i, j));
      if (d < best_d) {
        best_d = d;
        best = r;
      }
    }
    const auto p = m.predict_proba(q.row(i));
    CHECK(argmax(p) == static_cast<std::size_t>(y[best]));
    CHECK(p[static_cast<std::size_t>(y[best])] == 1.0);
  }
}

TEST_CASE("logistic gradient matches finite differences") {
  Rng rng(11);
  const Matrix x = testing::random_matrix(30, 3, rng);
  std::vector<int> y(30);
  std::vector<double> w(30);
  for (std::size_t i = 0; i < 30; ++i) {
    y[i] = static_cast<int>(i % 3);
    w[i] = 0.5 + static_cast<double>(i % 4);
  }
  const TrainingData data{x, y, 3, w};
  std::normal_distribution<double> n(0.0, 0.5);
  std::vector<double> params(3 * 4);
  for (double& v : params) v = n(rng);
  const double l2 = 0.3;

  std::vector<double> grad;
  LogregModel::loss_and_gradient(params, data, l2, &grad);
  const auto numeric = oracle::numeric_gradient(
      [&](const std::vector<double>& p) { return LogregModel::loss_and_gradient(p, data, l2, nullptr); },
      params);
  REQUIRE(grad.size() == numeric.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    CHECK(std::abs(grad[i] - numeric[i]) <= 1e-5 * std::max(1.0, std::abs(numeric[i])));
  }
}

TEST_CASE("logistic regression on a separable line") {
  Matrix x(40, 1);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    x(i, 0) = static_cast<double>(i) - 19.5;
    y[i] = i >= 20;
  }
  const LogregModel m = LogregModel::fit({x, y, 2, {}}, LogregHyper{});
  CHECK(m.predict_proba(std::vector<double>{-10.0})[0] > 0.99);
  CHECK(m.predict_proba(std::vector<double>{10.0})[1] > 0.99);
  CHECK(m.predict_proba(std::vector<double>{0.0})[0] == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("one-tree forest without bootstrap is a single CART tree") {
  const Blobs b = blobs(25, 5, 4, 1.5);
  ForestHyper h;
  h.n_trees = 1;
  h.bootstrap = false;
  h.threads = 1;
  const std::uint64_t seed = 77;
  const auto forest = RandomForestModel::fit({b.x, b.y, 3, {}}, h, seed);

  Rng rng(derive_seed(seed, 0));
  DecisionTree::Options opts;
  opts.max_features = 2;  // floor(sqrt(5))
  const std::vector<double> ones(b.x.rows(), 1.0);
  const auto tree = DecisionTree::fit(b.x, b.y, 3, ones, opts, rng);
  CHECK(forest.trees().front().to_json() == tree.to_json());
  for (std::size_t i = 0; i < b.x.rows(); ++i) {
    const auto p = tree.predict_proba(b.x.row(i));
    CHECK(forest.predict_proba(b.x.row(i)) == std::vector<double>(p.begin(), p.end()));
  }
}

TEST_CASE("unrestricted tree fits distinct points exactly") {
  Rng rng(21);
  const Matrix x = testing::random_matrix(60, 2, rng);
  std::vector<int> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = static_cast<int>((i * 7) % 3);
  const std::vector<double> ones(60, 1.0);
  const auto tree = DecisionTree::fit(x, y, 3, ones, DecisionTree::Options{}, rng);
  for (std::size_t i = 0; i < 60; ++i) {
    CHECK(tree.predict_proba(x.row(i))[static_cast<std::size_t>(y[i])] == 1.0);
  }
  for (const auto& node : tree.nodes()) {
    if (node.feature < 0) {
      CHECK(std::accumulate(node.distribution.begin(), node.distribution.end(), 0.0) ==
            doctest::Approx(1.0));
    }
  }
}

TEST_CASE("gbt first-round leaves are newton steps") {
  // Four samples, classes 0 0 0 1. At a zero score p = 1/2, so for class 0
  // g = p - y = (-1/2, -1/2, -1/2, 1/2) and h = 1/4.
  Matrix x(4, 1);
  for (std::size_t i = 0; i < 4; ++i) x(i, 0) = static_cast<double>(i);
  const std::vector<int> y{0, 0, 0, 1};

  GbtHyper stump;
  stump.n_rounds = 1;
  stump.max_depth = 0;
  stump.lambda = 1.0;
  const GbtModel root = GbtModel::fit({x, y, 2, {}}, stump);
  // G = -1, H = 1: value 1 / 2.
  CHECK(root.rounds()[0][0].nodes()[0].value == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(root.rounds()[0][1].nodes()[0].value == doctest::Approx(-0.5).epsilon(1e-12));

  GbtHyper deeper = stump;
  deeper.max_depth = 2;
  const GbtModel m = GbtModel::fit({x, y, 2, {}}, deeper);
  for (std::size_t c = 0; c < 2; ++c) {
    const GradientTree& t = m.rounds()[0][c];
    // Recompute every leaf from the samples that reach it.
    std::map<const GradientTree::Node*, std::pair<double, double>> stats;
    for (std::size_t i = 0; i < 4; ++i) {
      int n = 0;
      while (t.nodes()[static_cast<std::size_t>(n)].feature >= 0) {
        const auto& node = t.nodes()[static_cast<std::size_t>(n)];
        n = x(i, static_cast<std::size_t>(node.feature)) <= node.threshold ? node.left : node.right;
      }
      const double yi = static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0;
      auto& s = stats[&t.nodes()[static_cast<std::size_t>(n)]];
      s.first += 0.5 - yi;
      s.second += 0.25;
    }
    CHECK(stats.size() >= 2);
    for (const auto& [leaf, gh] : stats) {
      CHECK(leaf->value == doctest::Approx(-gh.first / (gh.second + 1.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gbt training loss does not increase") {
  const Blobs b = blobs(40, 3, 9, 2.0);
  GbtHyper h;
  h.n_rounds = 30;
  h.max_depth = 3;
  const GbtModel m = GbtModel::fit({b.x, b.y, 3, {}}, h);
  REQUIRE(m.loss_history().size() == 31);
  CHECK(m.loss_history().front() == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  for (std::size_t i = 1; i < m.loss_history().size(); ++i) {
    CHECK(m.loss_history()[i] <= m.loss_history()[i - 1] + 1e-12);
  }
}

TEST_CASE("class weights shift the decision") {
  Matrix x(20, 1);
  std::vector<ClassLabel> y(20);
  for (std::size_t i = 0; i < 20; ++i) {
    x(i, 0) = i < 10 ? -1.0 : 1.0;
    y[i] = i < 10 ? ClassLabel::kBackdoor : ClassLabel::kXss;
  }
  // Flip two points so the boundary region is contested.
  y[9] = ClassLabel::kXss;
  y[10] = ClassLabel::kBackdoor;
  ClassifierOptions plain = options_for(LogregHyper{});
  ClassifierOptions heavy = plain;
  heavy.class_weight[ClassLabel::kXss] = 20.0;
  const std::vector<double> mid{0.0};
  const auto a = train_classifier(x, y, plain).predict_proba(mid);
  const auto b = train_classifier(x, y, heavy).predict_proba(mid);
  CHECK(b[1] > a[1]);
}

TEST_CASE("hyperparameter json and kind aliases") {
  CHECK(parse_classifier_kind("RF") == ClassifierKind::kRandomForest);
  CHECK(parse_classifier_kind("xgboost") == ClassifierKind::kGbt);
  CHECK(parse_classifier_kind("lr") == ClassifierKind::kLogreg);
  CHECK_FALSE(parse_classifier_kind("perceptron").has_value());

  for (const auto& h : small_hypers()) {
    CHECK(hyper_to_json(classifier_hyper_from_json(hyper_to_json(h))) == hyper_to_json(h));
  }
  const auto rf = classifier_hyper_from_json({{"kind", "random_forest"}, {"n_trees", 7}});
  CHECK(std::get<ForestHyper>(rf).n_trees == 7);
  CHECK_THROWS_AS(classifier_hyper_from_json({{"kind", "knn"}, {"depth", 3}}), InvalidArgument);
  CHECK_THROWS_AS(classifier_hyper_from_json({{"k", 3}}), InvalidArgument);
  CHECK_THROWS_AS(classifier_hyper_from_json({{"kind", "svm"}, {"kernel", "poly"}}), InvalidArgument);
}

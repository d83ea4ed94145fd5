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
#include <limits>
#include <numeric>
#include <thread>

#include "mi2das/classifiers.h"
#include "mi2das/errors.h"

namespace mi2das {
namespace {

double gini(std::span<const double> counts, double total) {
  if (total <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += c * c;
  return 1.0 - s / (total * total);
}

double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

nlohmann::json vec_json(const std::vector<double>& v) { return v; }

}  // namespace

// ---------------------------------------------------------------------------
// DecisionTree

DecisionTree DecisionTree::fit(const Matrix& x, std::span<const int> y, int n_classes,
                               std::span<const double> sample_weight, const Options& options,
                               Rng& rng) {
  const std::size_t d = x.cols();
  const auto k = static_cast<std::size_t>(n_classes);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (sample_weight[i] > 0.0) rows.push_back(i);
  }
  if (rows.empty()) throw InvalidArgument("decision tree needs a positively weighted sample");
  const std::size_t max_features =
      options.max_features <= 0 ? d : std::min<std::size_t>(d, static_cast<std::size_t>(options.max_features));
  const auto min_leaf = static_cast<std::size_t>(std::max(1, options.min_samples_leaf));

  DecisionTree tree;
  struct Task {
    int node;
    std::size_t begin, end;
    int depth;
  };
  tree.nodes_.push_back({});
  std::vector<Task> stack{{0, 0, rows.size(), 0}};
  std::vector<double> counts(k);
  std::vector<double> left_counts(k);
  std::vector<std::size_t> order;
  while (!stack.empty()) {
    const Task task = stack.back();
    stack.pop_back();
    std::fill(counts.begin(), counts.end(), 0.0);
    double total = 0.0;
    for (std::size_t p = task.begin; p < task.end; ++p) {
      counts[static_cast<std::size_t>(y[rows[p]])] += sample_weight[rows[p]];
      total += sample_weight[rows[p]];
    }
    const std::size_t m = task.end - task.begin;
    const double parent = gini(counts, total);
    auto make_leaf = [&]() {
      auto& dist = tree.nodes_[task.node].distribution;
      dist.resize(k);
      for (std::size_t c = 0; c < k; ++c) dist[c] = counts[c] / total;
    };
    if (parent <= 0.0 || m < 2 * min_leaf ||
        (options.max_depth && task.depth >= *options.max_depth)) {
      make_leaf();
      continue;
    }

    double best_impurity = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    std::size_t tried = 0;
    for (std::size_t f : sample_without_replacement(d, d, rng)) {
      order.assign(rows.begin() + static_cast<std::ptrdiff_t>(task.begin),
                   rows.begin() + static_cast<std::ptrdiff_t>(task.end));
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = x(a, f), vb = x(b, f);
        return va < vb || (va == vb && a < b);
      });
      if (x(order.front(), f) == x(order.back(), f)) continue;  // constant here
      std::fill(left_counts.begin(), left_counts.end(), 0.0);
      double left_total = 0.0;
      for (std::size_t p = 0; p + 1 < m; ++p) {
        const std::size_t r = order[p];
        left_counts[static_cast<std::size_t>(y[r])] += sample_weight[r];
        left_total += sample_weight[r];
        const double v = x(r, f);
        const double next = x(order[p + 1], f);
        if (!(next > v) || p + 1 < min_leaf || m - p - 1 < min_leaf) continue;
        double right_g = 0.0;
        const double right_total = total - left_total;
        if (right_total > 0.0) {
          double s = 0.0;
          for (std::size_t c = 0; c < k; ++c) {
            const double rc = counts[c] - left_counts[c];
            s += rc * rc;
          }
          right_g = 1.0 - s / (right_total * right_total);
        }
        const double impurity = left_total * gini(left_counts, left_total) +
                                right_total * right_g;
        if (impurity < best_impurity) {
          best_impurity = impurity;
          best_feature = static_cast<int>(f);
          best_threshold = split_point(v, next);
        }
      }
      if (++tried >= max_features && best_feature >= 0) break;
    }
    if (best_feature < 0) {
      make_leaf();
      continue;
    }
    const auto f = static_cast<std::size_t>(best_feature);
    const auto mid = std::stable_partition(
        rows.begin() + static_cast<std::ptrdiff_t>(task.begin),
        rows.begin() + static_cast<std::ptrdiff_t>(task.end),
        [&](std::size_t r) { return x(r, f) <= best_threshold; });
    const auto split = static_cast<std::size_t>(mid - rows.begin());
    const int left = static_cast<int>(tree.nodes_.size());
    tree.nodes_.push_back({});
    tree.nodes_.push_back({});
    auto& node = tree.nodes_[task.node];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left;
    node.right = left + 1;
    stack.push_back({left + 1, split, task.end, task.depth + 1});
    stack.push_back({left, task.begin, split, task.depth + 1});
  }
  return tree;
}

std::span<const double> DecisionTree::predict_proba(std::span<const double> x) const {
  int n = 0;
  while (nodes_[n].feature >= 0) {
    n = x[static_cast<std::size_t>(nodes_[n].feature)] <= nodes_[n].threshold ? nodes_[n].left
                                                                               : nodes_[n].right;
  }
  return nodes_[n].distribution;
}

nlohmann::json DecisionTree::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& n : nodes_) {
    if (n.feature >= 0) {
      out.push_back({n.feature, n.threshold, n.left, n.right});
    } else {
      out.push_back({-1, vec_json(n.distribution)});
    }
  }
  return out;
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  DecisionTree t;
  for (const auto& n : j) {
    Node node;
    node.feature = n.at(0).get<int>();
    if (node.feature >= 0) {
      node.threshold = n.at(1).get<double>();
      node.left = n.at(2).get<int>();
      node.right = n.at(3).get<int>();
    } else {
      node.distribution = n.at(1).get<std::vector<double>>();
    }
    t.nodes_.push_back(std::move(node));
  }
  return t;
}

// ---------------------------------------------------------------------------
// RandomForestModel

RandomForestModel RandomForestModel::fit(const TrainingData& data, const ForestHyper& hyper,
                                         std::uint64_t seed) {
  if (hyper.n_trees < 1) throw InvalidArgument("random forest needs at least one tree");
  const std::size_t n = data.x.rows();
  const std::size_t d = data.x.cols();
  RandomForestModel forest;
  forest.dim_ = d;
  forest.n_classes_ = data.n_classes;
  DecisionTree::Options opts;
  opts.max_features = hyper.max_features.value_or(
      std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d))))));
  opts.max_depth = hyper.max_depth;
  opts.min_samples_leaf = hyper.min_samples_leaf;

  const auto n_trees = static_cast<std::size_t>(hyper.n_trees);
  std::vector<std::optional<DecisionTree>> trees(n_trees);
  auto grow = [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    std::vector<double> w(n, 1.0);
    if (hyper.bootstrap) {
      std::fill(w.begin(), w.end(), 0.0);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < n; ++i) w[pick(rng)] += 1.0;
    }
    if (!data.weight.empty()) {
      for (std::size_t i = 0; i < n; ++i) w[i] *= data.weight[i];
    }
    trees[t] = DecisionTree::fit(data.x, data.y, data.n_classes, w, opts, rng);
  };
  std::size_t threads = hyper.threads > 0 ? static_cast<std::size_t>(hyper.threads)
                                          : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n_trees);
  if (threads <= 1) {
    for (std::size_t t = 0; t < n_trees; ++t) grow(t);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t t = w; t < n_trees; t += threads) grow(t);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (auto& t : trees) forest.trees_.push_back(std::move(*t));
  return forest;
}

std::vector<double> RandomForestModel::predict_proba(std::span<const double> x) const {
  std::vector<double> p(static_cast<std::size_t>(n_classes_), 0.0);
  for (const auto& tree : trees_) {
    const auto leaf = tree.predict_proba(x);
    for (std::size_t c = 0; c < p.size(); ++c) p[c] += leaf[c];
  }
  double s = 0.0;
  for (double v : p) s += v;
  for (double& v : p) v /= s;
  return p;
}

nlohmann::json RandomForestModel::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return {{"dim", dim_}, {"n_classes", n_classes_}, {"trees", std::move(trees)}};
}

RandomForestModel RandomForestModel::from_json(const nlohmann::json& j) {
  RandomForestModel f;
  f.dim_ = j.at("dim").get<std::size_t>();
  f.n_classes_ = j.at("n_classes").get<int>();
  for (const auto& t : j.at("trees")) f.trees_.push_back(DecisionTree::from_json(t));
  return f;
}

// ---------------------------------------------------------------------------
// GradientTree

GradientTree GradientTree::fit(const Matrix& x, std::span<const double> g,
                               std::span<const double> h, const GbtHyper& hyper) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const double lambda = hyper.lambda;
  // Feature-wise row orders, shared by every level.
  std::vector<std::vector<std::size_t>> sorted(d);
  for (std::size_t f = 0; f < d; ++f) {
    sorted[f].resize(n);
    std::iota(sorted[f].begin(), sorted[f].end(), 0);
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
  }

  GradientTree tree;
  tree.nodes_.push_back({});
  std::vector<int> node_of(n, 0);
  std::vector<int> active{0};
  std::vector<double> gsum(1, 0.0), hsum(1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    gsum[0] += g[i];
    hsum[0] += h[i];
  }
  auto leaf_value = [&](int nd) { return -gsum[nd] / (hsum[nd] + lambda); };

  for (int depth = 0; depth < hyper.max_depth && !active.empty(); ++depth) {
    const std::size_t nn = tree.nodes_.size();
    std::vector<char> is_active(nn, 0);
    for (int a : active) is_active[a] = 1;
    std::vector<double> best_gain(nn, 0.0), best_thr(nn, 0.0);
    std::vector<int> best_feat(nn, -1);
    std::vector<double> gl(nn), hl(nn), last(nn);
    std::vector<char> seen(nn);
    for (std::size_t f = 0; f < d; ++f) {
      std::fill(gl.begin(), gl.end(), 0.0);
      std::fill(hl.begin(), hl.end(), 0.0);
      std::fill(seen.begin(), seen.end(), 0);
      for (std::size_t i : sorted[f]) {
        const int nd = node_of[i];
        if (nd < 0 || !is_active[nd]) continue;
        const double v = x(i, f);
        if (seen[nd] && v > last[nd]) {
          const double gr = gsum[nd] - gl[nd];
          const double hr = hsum[nd] - hl[nd];
          if (hl[nd] >= hyper.min_child_weight && hr >= hyper.min_child_weight) {
            const double gain = 0.5 * (gl[nd] * gl[nd] / (hl[nd] + lambda) +
                                       gr * gr / (hr + lambda) -
                                       gsum[nd] * gsum[nd] / (hsum[nd] + lambda));
            if (gain > best_gain[nd] + 1e-12) {
              best_gain[nd] = gain;
              best_feat[nd] = static_cast<int>(f);
              best_thr[nd] = split_point(last[nd], v);
            }
          }
        }
        gl[nd] += g[i];
        hl[nd] += h[i];
        last[nd] = v;
        seen[nd] = 1;
      }
    }
    std::vector<int> next;
    std::vector<int> left_child(nn, -1);
    for (int a : active) {
      if (best_feat[a] < 0) {
        tree.nodes_[a].value = leaf_value(a);
        continue;
      }
      const int left = static_cast<int>(tree.nodes_.size());
      tree.nodes_.push_back({});
      tree.nodes_.push_back({});
      gsum.resize(tree.nodes_.size(), 0.0);
      hsum.resize(tree.nodes_.size(), 0.0);
      tree.nodes_[a].feature = best_feat[a];
      tree.nodes_[a].threshold = best_thr[a];
      tree.nodes_[a].left = left;
      tree.nodes_[a].right = left + 1;
      left_child[a] = left;
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int nd = node_of[i];
      if (nd < 0 || nd >= static_cast<int>(nn) || !is_active[nd]) continue;
      if (left_child[nd] < 0) {
        node_of[i] = -1;  // settled in a leaf
        continue;
      }
      const auto& node = tree.nodes_[nd];
      const int child = x(i, static_cast<std::size_t>(node.feature)) <= node.threshold
                            ? node.left
                            : node.right;
      node_of[i] = child;
      gsum[child] += g[i];
      hsum[child] += h[i];
    }
    active = std::move(next);
  }
  for (int a : active) tree.nodes_[a].value = leaf_value(a);
  return tree;
}

double GradientTree::predict(std::span<const double> x) const {
  int n = 0;
  while (nodes_[n].feature >= 0) {
    n = x[static_cast<std::size_t>(nodes_[n].feature)] <= nodes_[n].threshold ? nodes_[n].left
                                                                               : nodes_[n].right;
  }
  return nodes_[n].value;
}

nlohmann::json GradientTree::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& n : nodes_) {
    if (n.feature >= 0) {
      out.push_back({n.feature, n.threshold, n.left, n.right});
    } else {
      out.push_back({-1, n.value});
    }
  }
  return out;
}

GradientTree GradientTree::from_json(const nlohmann::json& j) {
  GradientTree t;
  for (const auto& n : j) {
    Node node;
    node.feature = n.at(0).get<int>();
    if (node.feature >= 0) {
      node.threshold = n.at(1).get<double>();
      node.left = n.at(2).get<int>();
      node.right = n.at(3).get<int>();
    } else {
      node.value = n.at(1).get<double>();
    }
    t.nodes_.push_back(node);
  }
  return t;
}

// ---------------------------------------------------------------------------
// GbtModel

namespace {

void softmax_inplace(std::span<double> z) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
}

}  // namespace

GbtModel GbtModel::fit(const TrainingData& data, const GbtHyper& hyper) {
  if (hyper.n_rounds < 0 || hyper.max_depth < 0) {
    throw InvalidArgument("GBT rounds and depth must be non-negative");
  }
  if (!(hyper.learning_rate > 0.0) || hyper.lambda < 0.0) {
    throw InvalidArgument("GBT learning_rate must be > 0 and lambda >= 0");
  }
  const std::size_t n = data.x.rows();
  const auto k = static_cast<std::size_t>(data.n_classes);
  GbtModel model;
  model.dim_ = data.x.cols();
  model.n_classes_ = data.n_classes;
  model.learning_rate_ = hyper.learning_rate;

  std::vector<double> w(n, 1.0);
  if (!data.weight.empty()) w.assign(data.weight.begin(), data.weight.end());
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> scores(n * k, 0.0);
  std::vector<double> prob(n * k);
  auto refresh = [&]() {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::span<double> p(prob.data() + i * k, k);
      std::copy(scores.begin() + static_cast<std::ptrdiff_t>(i * k),
                scores.begin() + static_cast<std::ptrdiff_t>((i + 1) * k), p.begin());
      softmax_inplace(p);
      loss -= w[i] * std::log(std::max(p[static_cast<std::size_t>(data.y[i])], 1e-300));
    }
    return loss / wsum;
  };
  model.loss_history_.push_back(refresh());

  std::vector<double> g(n), h(n);
  for (int r = 0; r < hyper.n_rounds; ++r) {
    std::vector<GradientTree> round;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob[i * k + c];
        const double y = static_cast<std::size_t>(data.y[i]) == c ? 1.0 : 0.0;
        g[i] = w[i] * (p - y);
        h[i] = w[i] * std::max(p * (1.0 - p), 1e-16);
      }
      round.push_back(GradientTree::fit(data.x, g, h, hyper));
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        scores[i * k + c] += hyper.learning_rate * round[c].predict(data.x.row(i));
      }
    }
    model.rounds_.push_back(std::move(round));
    model.loss_history_.push_back(refresh());
  }
  return model;
}

std::vector<double> GbtModel::raw_scores(std::span<const double> x) const {
  std::vector<double> s(static_cast<std::size_t>(n_classes_), 0.0);
  for (const auto& round : rounds_) {
    for (std::size_t c = 0; c < s.size(); ++c) s[c] += learning_rate_ * round[c].predict(x);
  }
  return s;
}

std::vector<double> GbtModel::predict_proba(std::span<const double> x) const {
  std::vector<double> s = raw_scores(x);
  softmax_inplace(s);
  return s;
}

nlohmann::json GbtModel::to_json() const {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& round : rounds_) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& t : round) r.push_back(t.to_json());
    rounds.push_back(std::move(r));
  }
  return {{"dim", dim_},
          {"n_classes", n_classes_},
          {"learning_rate", learning_rate_},
          {"loss_history", loss_history_},
          {"rounds", std::move(rounds)}};
}

GbtModel GbtModel::from_json(const nlohmann::json& j) {
  GbtModel m;
  m.dim_ = j.at("dim").get<std::size_t>();
  m.n_classes_ = j.at("n_classes").get<int>();
  m.learning_rate_ = j.at("learning_rate").get<double>();
  m.loss_history_ = j.at("loss_history").get<std::vector<double>>();
  for (const auto& r : j.at("rounds")) {
    std::vector<GradientTree> round;
    for (const auto& t : r) round.push_back(GradientTree::from_json(t));
    m.rounds_.push_back(std::move(round));
  }
  return m;
}

}  // namespace mi2das

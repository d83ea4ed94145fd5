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
#include <deque>
#include <limits>
#include <numeric>

#include "mi2das/classifiers.h"
#include "mi2das/errors.h"

namespace mi2das {
namespace {

double dot_all(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double LogregModel::loss_and_gradient(std::span<const double> params, const TrainingData& data,
                                      double l2, std::vector<double>* grad) {
  const std::size_t n = data.x.rows();
  const std::size_t d = data.x.cols();
  const auto k = static_cast<std::size_t>(data.n_classes);
  const std::size_t stride = d + 1;
  if (params.size() != k * stride) throw InvalidArgument("logistic parameter size mismatch");
  if (grad != nullptr) grad->assign(params.size(), 0.0);
  double wsum = 0.0;
  double loss = 0.0;
  std::vector<double> z(k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = data.x.row(i);
    const double w = data.weight.empty() ? 1.0 : data.weight[i];
    wsum += w;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double* row = params.data() + c * stride;
      double s = row[d];
      for (std::size_t j = 0; j < d; ++j) s += row[j] * xi[j];
      z[c] = s;
      m = std::max(m, s);
    }
    double se = 0.0;
    for (std::size_t c = 0; c < k; ++c) se += std::exp(z[c] - m);
    const double lse = m + std::log(se);
    const auto yi = static_cast<std::size_t>(data.y[i]);
    loss += w * (lse - z[yi]);
    if (grad != nullptr) {
      for (std::size_t c = 0; c < k; ++c) {
        const double coef = w * (std::exp(z[c] - lse) - (c == yi ? 1.0 : 0.0));
        double* g = grad->data() + c * stride;
        for (std::size_t j = 0; j < d; ++j) g[j] += coef * xi[j];
        g[d] += coef;
      }
    }
  }
  loss /= wsum;
  double reg = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = params[c * stride + j];
      reg += v * v;
    }
  }
  loss += 0.5 * l2 * reg;
  if (grad != nullptr) {
    for (auto& g : *grad) g /= wsum;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < d; ++j) (*grad)[c * stride + j] += l2 * params[c * stride + j];
    }
  }
  return loss;
}

LogregModel LogregModel::fit(const TrainingData& data, const LogregHyper& hyper) {
  if (hyper.l2 < 0.0 || !(hyper.tol > 0.0) || hyper.max_iter < 1) {
    throw InvalidArgument("logistic regression needs l2 >= 0, tol > 0, max_iter >= 1");
  }
  const std::size_t d = data.x.cols();
  const auto k = static_cast<std::size_t>(data.n_classes);
  std::vector<double> w(k * (d + 1), 0.0);
  std::vector<double> g;
  double f = loss_and_gradient(w, data, hyper.l2, &g);

  // L-BFGS with backtracking (Armijo) line search.
  constexpr std::size_t kMemory = 10;
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  int it = 0;
  for (; it < hyper.max_iter; ++it) {
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    if (gmax < hyper.tol) break;

    std::vector<double> q = g;
    std::vector<double> a(s_hist.size());
    for (std::size_t m = s_hist.size(); m-- > 0;) {
      a[m] = rho_hist[m] * dot_all(s_hist[m], q);
      for (std::size_t i = 0; i < q.size(); ++i) q[i] -= a[m] * y_hist[m][i];
    }
    if (!s_hist.empty()) {
      const double scale = dot_all(s_hist.back(), y_hist.back()) /
                           dot_all(y_hist.back(), y_hist.back());
      for (double& v : q) v *= scale;
    }
    for (std::size_t m = 0; m < s_hist.size(); ++m) {
      const double b = rho_hist[m] * dot_all(y_hist[m], q);
      for (std::size_t i = 0; i < q.size(); ++i) q[i] += s_hist[m][i] * (a[m] - b);
    }
    // Search direction is -q.
    double slope = -dot_all(g, q);
    if (!(slope < 0.0)) {
      q = g;
      slope = -dot_all(g, g);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    double step = 1.0;
    std::vector<double> w_new(w.size()), g_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < w.size(); ++i) w_new[i] = w[i] - step * q[i];
      f_new = loss_and_gradient(w_new, data, hyper.l2, &g_new);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    std::vector<double> s(w.size()), yv(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      s[i] = w_new[i] - w[i];
      yv[i] = g_new[i] - g[i];
    }
    const double sy = dot_all(s, yv);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double change = f - f_new;
    w.swap(w_new);
    g.swap(g_new);
    f = f_new;
    if (change <= hyper.tol * 1e-3 * std::max(1.0, std::abs(f))) break;
  }
  LogregModel model = from_parameters(d, data.n_classes, std::move(w));
  model.iterations_ = it;
  return model;
}

LogregModel LogregModel::from_parameters(std::size_t dim, int n_classes,
                                         std::vector<double> params) {
  if (params.size() != static_cast<std::size_t>(n_classes) * (dim + 1)) {
    throw InvalidArgument("logistic parameter size mismatch");
  }
  LogregModel m;
  m.dim_ = dim;
  m.n_classes_ = n_classes;
  m.params_ = std::move(params);
  return m;
}

std::vector<double> LogregModel::predict_proba(std::span<const double> x) const {
  const auto k = static_cast<std::size_t>(n_classes_);
  std::vector<double> z(k);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double* row = params_.data() + c * (dim_ + 1);
    double s = row[dim_];
    for (std::size_t j = 0; j < dim_; ++j) s += row[j] * x[j];
    z[c] = s;
    m = std::max(m, s);
  }
  double se = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    se += v;
  }
  for (double& v : z) v /= se;
  return z;
}

nlohmann::json LogregModel::to_json() const {
  return {{"dim", dim_}, {"n_classes", n_classes_}, {"params", params_},
          {"iterations", iterations_}};
}

LogregModel LogregModel::from_json(const nlohmann::json& j) {
  LogregModel m = from_parameters(j.at("dim").get<std::size_t>(), j.at("n_classes").get<int>(),
                                  j.at("params").get<std::vector<double>>());
  m.iterations_ = j.value("iterations", 0);
  return m;
}

}  // namespace mi2das

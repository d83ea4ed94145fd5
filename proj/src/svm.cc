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

#include "mi2das/classifiers.h"
#include "mi2das/errors.h"

namespace mi2das {

SvmModel SvmModel::fit(const TrainingData& data, const SvmHyper& hyper, std::uint64_t seed) {
  if (!(hyper.c > 0.0)) throw InvalidArgument("SVM C must be > 0");
  if (hyper.gamma && !(*hyper.gamma > 0.0)) throw InvalidArgument("SVM gamma must be > 0");
  std::size_t n = data.x.rows();
  const auto k = static_cast<std::size_t>(data.n_classes);

  // Optional stratified cap: each class keeps round(cap * n_c / n) rows, at least one.
  std::vector<std::size_t> keep;
  if (hyper.max_train && *hyper.max_train < n) {
    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(data.y[i])].push_back(i);
    Rng rng(seed);
    for (const auto& rows : by_class) {
      if (rows.empty()) continue;
      const auto want = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(static_cast<double>(*hyper.max_train) *
                                                static_cast<double>(rows.size()) /
                                                static_cast<double>(n))),
          1, rows.size());
      for (std::size_t p : sample_without_replacement(rows.size(), want, rng)) {
        keep.push_back(rows[p]);
      }
    }
    std::sort(keep.begin(), keep.end());
  } else {
    keep.resize(n);
    for (std::size_t i = 0; i < n; ++i) keep[i] = i;
  }
  Matrix x;
  for (std::size_t i : keep) x.append_row(data.x.row(i));
  n = keep.size();

  SvmModel model;
  model.dim_ = data.x.cols();
  model.kernel_ = Kernel{hyper.kernel, hyper.kernel == KernelType::kRbf
                                           ? hyper.gamma.value_or(scale_gamma(x))
                                           : 1.0};
  for (std::size_t c = 0; c < k; ++c) {
    SmoProblem prob;
    prob.p.assign(n, -1.0);
    prob.y.resize(n);
    prob.upper.resize(n);
    prob.alpha.assign(n, 0.0);
    prob.eps = hyper.tol;
    prob.max_iter = hyper.max_iter;
    for (std::size_t i = 0; i < n; ++i) {
      prob.y[i] = static_cast<std::size_t>(data.y[keep[i]]) == c ? 1.0 : -1.0;
      prob.upper[i] = hyper.c * (data.weight.empty() ? 1.0 : data.weight[keep[i]]);
    }
    KernelCache cache(x, prob.y, model.kernel_, hyper.cache_mb << 20);
    const std::vector<double> y = prob.y;
    const SmoResult res = solve_smo(cache, std::move(prob));
    Binary b;
    b.rho = res.rho;
    for (std::size_t i = 0; i < n; ++i) {
      if (res.alpha[i] > 0.0) {
        b.support.append_row(x.row(i));
        b.coef.push_back(y[i] * res.alpha[i]);
      }
    }
    model.machines_.push_back(std::move(b));
  }
  return model;
}

std::vector<double> SvmModel::decision(std::span<const double> x) const {
  std::vector<double> out;
  out.reserve(machines_.size());
  for (const auto& m : machines_) {
    double s = -m.rho;
    for (std::size_t i = 0; i < m.support.rows(); ++i) s += m.coef[i] * kernel_(m.support.row(i), x);
    out.push_back(s);
  }
  return out;
}

std::vector<double> SvmModel::predict_proba(std::span<const double> x) const {
  std::vector<double> z = decision(x);
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
  return z;
}

nlohmann::json SvmModel::to_json() const {
  nlohmann::json machines = nlohmann::json::array();
  for (const auto& m : machines_) {
    machines.push_back({{"rows", m.support.rows()},
                        {"support", m.support.data()},
                        {"coef", m.coef},
                        {"rho", m.rho}});
  }
  return {{"dim", dim_},
          {"kernel", kernel_.type == KernelType::kRbf ? "rbf" : "linear"},
          {"gamma", kernel_.gamma},
          {"machines", std::move(machines)}};
}

SvmModel SvmModel::from_json(const nlohmann::json& j) {
  SvmModel m;
  m.dim_ = j.at("dim").get<std::size_t>();
  m.kernel_.type = j.at("kernel").get<std::string>() == "linear" ? KernelType::kLinear
                                                                  : KernelType::kRbf;
  m.kernel_.gamma = j.at("gamma").get<double>();
  for (const auto& mj : j.at("machines")) {
    Binary b;
    const auto rows = mj.at("rows").get<std::size_t>();
    const auto flat = mj.at("support").get<std::vector<double>>();
    if (flat.size() != rows * m.dim_) throw DataError("SVM payload is inconsistent");
    for (std::size_t r = 0; r < rows; ++r) {
      b.support.append_row(std::span<const double>(flat.data() + r * m.dim_, m.dim_));
    }
    b.coef = mj.at("coef").get<std::vector<double>>();
    b.rho = mj.at("rho").get<double>();
    if (b.coef.size() != rows) throw DataError("SVM payload is inconsistent");
    m.machines_.push_back(std::move(b));
  }
  return m;
}

}  // namespace mi2das

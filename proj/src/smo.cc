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

#include "mi2das/smo.h"

#include <cmath>
#include <limits>

#include "mi2das/errors.h"

namespace mi2das {
namespace {

constexpr double kTau = 1e-12;

}  // namespace

double Kernel::operator()(std::span<const double> a, std::span<const double> b) const {
  if (type == KernelType::kLinear) return dot(a, b);
  return std::exp(-gamma * squared_distance(a, b));
}

double scale_gamma(const Matrix& x) {
  const auto& v = x.data();
  if (v.empty()) throw InvalidArgument("scale_gamma of an empty matrix");
  double mean = 0.0;
  for (double e : v) mean += e;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double e : v) var += (e - mean) * (e - mean);
  var /= static_cast<double>(v.size());
  return var > 0.0 ? 1.0 / (static_cast<double>(x.cols()) * var) : 1.0;
}

KernelCache::KernelCache(const Matrix& x, std::span<const double> y, Kernel kernel,
                         std::size_t cache_bytes)
    : x_(x), y_(y.begin(), y.end()), kernel_(kernel) {
  const std::size_t n = x.rows();
  diag_.resize(n);
  for (std::size_t i = 0; i < n; ++i) diag_[i] = kernel_(x.row(i), x.row(i));
  const std::size_t row_bytes = std::max<std::size_t>(1, n * sizeof(double));
  capacity_ = std::max<std::size_t>(2, cache_bytes / row_bytes);
}

std::span<const double> KernelCache::column(int i) {
  auto it = rows_.find(i);
  if (it != rows_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second.second);
    return it->second.first;
  }
  if (rows_.size() >= capacity_) {
    rows_.erase(lru_.back());
    lru_.pop_back();
  }
  const std::size_t n = x_.rows();
  std::vector<double> col(n);
  const auto xi = x_.row(static_cast<std::size_t>(i));
  const double yi = y_[static_cast<std::size_t>(i)];
  for (std::size_t j = 0; j < n; ++j) col[j] = yi * y_[j] * kernel_(xi, x_.row(j));
  lru_.push_front(i);
  auto [pos, inserted] = rows_.emplace(i, std::make_pair(std::move(col), lru_.begin()));
  return pos->second.first;
}

SmoResult solve_smo(KernelCache& q, SmoProblem prob) {
  const int n = q.size();
  const auto un = static_cast<std::size_t>(n);
  if (prob.p.size() != un || prob.y.size() != un || prob.upper.size() != un ||
      prob.alpha.size() != un) {
    throw InvalidArgument("SMO problem vectors do not match the kernel size");
  }
  auto& alpha = prob.alpha;
  const auto& y = prob.y;
  const auto& c = prob.upper;
  auto at_upper = [&](int t) { return alpha[t] >= c[t]; };
  auto at_lower = [&](int t) { return alpha[t] <= 0.0; };

  std::vector<double> grad(prob.p);
  for (int i = 0; i < n; ++i) {
    if (alpha[i] != 0.0) {
      const auto qi = q.column(i);
      for (int k = 0; k < n; ++k) grad[k] += alpha[i] * qi[k];
    }
  }

  SmoResult result;
  std::int64_t iter = 0;
  for (; iter < prob.max_iter; ++iter) {
    // Maximal violating pair with second-order selection of j.
    double gmax = -std::numeric_limits<double>::infinity();
    int i = -1;
    for (int t = 0; t < n; ++t) {
      if (y[t] > 0) {
        if (!at_upper(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          i = t;
        }
      } else if (!at_lower(t) && grad[t] >= gmax) {
        gmax = grad[t];
        i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    int j = -1;
    double obj_min = std::numeric_limits<double>::infinity();
    std::span<const double> qi;
    if (i != -1) qi = q.column(i);
    for (int t = 0; t < n && i != -1; ++t) {
      if (y[t] > 0) {
        if (at_lower(t)) continue;
        const double diff = gmax + grad[t];
        gmax2 = std::max(gmax2, grad[t]);
        if (diff > 0) {
          double quad = q.diag(i) + q.diag(t) - 2.0 * y[i] * qi[t];
          const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
          if (obj <= obj_min) {
            j = t;
            obj_min = obj;
          }
        }
      } else {
        if (at_upper(t)) continue;
        const double diff = gmax - grad[t];
        gmax2 = std::max(gmax2, -grad[t]);
        if (diff > 0) {
          double quad = q.diag(i) + q.diag(t) + 2.0 * y[i] * qi[t];
          const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
          if (obj <= obj_min) {
            j = t;
            obj_min = obj;
          }
        }
      }
    }
    if (i == -1 || j == -1 || gmax + gmax2 < prob.eps) {
      result.converged = true;
      break;
    }

    const auto qj = q.column(j);
    qi = q.column(i);  // may have been evicted by the fetch of j
    const double ci = c[i], cj = c[j];
    const double old_ai = alpha[i], old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = q.diag(i) + q.diag(j) + 2.0 * qi[j];
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > ci - cj) {
        if (alpha[i] > ci) { alpha[i] = ci; alpha[j] = ci - diff; }
      } else if (alpha[j] > cj) {
        alpha[j] = cj;
        alpha[i] = cj + diff;
      }
    } else {
      double quad = q.diag(i) + q.diag(j) - 2.0 * qi[j];
      if (quad <= 0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > ci) {
        if (alpha[i] > ci) { alpha[i] = ci; alpha[j] = sum - ci; }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > cj) {
        if (alpha[j] > cj) { alpha[j] = cj; alpha[i] = sum - cj; }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (int k = 0; k < n; ++k) grad[k] += qi[k] * dai + qj[k] * daj;
  }
  result.iterations = iter;

  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  int n_free = 0;
  for (int t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (at_upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  if (n_free > 0) {
    result.rho = sum_free / n_free;
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    result.rho = (ub + lb) / 2;
  } else {
    result.rho = std::isfinite(ub) ? ub : lb;
  }
  result.alpha = std::move(alpha);
  return result;
}

}  // namespace mi2das

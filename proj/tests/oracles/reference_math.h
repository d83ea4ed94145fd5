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

#ifndef MI2DAS_TESTS_ORACLES_REFERENCE_MATH_H_
#define MI2DAS_TESTS_ORACLES_REFERENCE_MATH_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <vector>

namespace oracle {

// H(n) = sum_{i=1..n} 1/i, summed smallest terms first in long double.
inline long double harmonic(std::size_t n) {
  long double s = 0.0L;
  for (std::size_t i = n; i >= 1; --i) s += 1.0L / static_cast<long double>(i);
  return s;
}

// c(n) = 2 H(n-1) - 2 (n-1) / n for n > 2; c(2) = 1; c(n <= 1) = 0.
inline long double bst_path_length(std::size_t n) {
  if (n <= 1) return 0.0L;
  if (n == 2) return 1.0L;
  const auto nn = static_cast<long double>(n);
  return 2.0L * harmonic(n - 1) - 2.0L * (nn - 1.0L) / nn;
}

// Interpolated percentile from the definition: position q/100 * (n - 1)
// between consecutive order statistics.
inline double quantile_by_hand(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const double lo = std::floor(pos);
  const auto i = static_cast<std::size_t>(lo);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - lo) * (v[i + 1] - v[i]);
}

// Central finite-difference gradient.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Multivariate normal log density with a diagonal covariance.
inline double diag_gaussian_log_density(const std::vector<double>& x, const std::vector<double>& mu,
                                        const std::vector<double>& var) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += -0.5 * std::log(2.0 * std::numbers::pi * var[i]) - 0.5 * (x[i] - mu[i]) * (x[i] - mu[i]) / var[i];
  }
  return s;
}

// Index of the nearest centroid.
inline std::size_t nearest_centroid(const std::vector<std::vector<double>>& centroids,
                                    const std::vector<double>& x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    double d = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) d += (x[j] - centroids[c][j]) * (x[j] - centroids[c][j]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// Binomial coefficient by Pascal's triangle.
inline std::uint64_t pascal(int n, int k) {
  std::vector<std::vector<std::uint64_t>> t(n + 1, std::vector<std::uint64_t>(n + 1, 0));
  for (int i = 0; i <= n; ++i) {
    t[i][0] = 1;
    for (int j = 1; j <= i; ++j) t[i][j] = t[i - 1][j - 1] + t[i - 1][j];
  }
  return t[n][k];
}

}  // namespace oracle

#endif  // MI2DAS_TESTS_ORACLES_REFERENCE_MATH_H_

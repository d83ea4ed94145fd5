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

#ifndef MI2DAS_SMO_H_
#define MI2DAS_SMO_H_

#include <cstdint>
#include <functional>
#include <list>
#include <span>
#include <unordered_map>
#include <vector>

#include "mi2das/matrix.h"

namespace mi2das {

enum class KernelType { kRbf, kLinear };

struct Kernel {
  KernelType type = KernelType::kRbf;
  double gamma = 1.0;

  double operator()(std::span<const double> a, std::span<const double> b) const;
};

// "scale" width: 1 / (dim * variance of all entries of X).
double scale_gamma(const Matrix& x);

// LRU cache of rows of Q_ij = y_i y_j K(x_i, x_j).
class KernelCache {
 public:
  KernelCache(const Matrix& x, std::span<const double> y, Kernel kernel,
              std::size_t cache_bytes);

  std::span<const double> column(int i);
  double diag(int i) const { return diag_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(x_.rows()); }

 private:
  const Matrix& x_;
  std::vector<double> y_;
  Kernel kernel_;
  std::vector<double> diag_;
  std::size_t capacity_;
  std::list<int> lru_;
  std::unordered_map<int, std::pair<std::vector<double>, std::list<int>::iterator>> rows_;
};

struct SmoProblem {
  std::vector<double> p;            // linear term
  std::vector<double> y;            // +1 / -1
  std::vector<double> upper;        // box bound per variable
  std::vector<double> alpha;        // feasible starting point
  double eps = 1e-3;
  std::int64_t max_iter = 10'000'000;
};

struct SmoResult {
  std::vector<double> alpha;
  double rho = 0.0;
  std::int64_t iterations = 0;
  bool converged = false;
};

// Sequential minimal optimization for
//   min 0.5 a'Qa + p'a  s.t.  y'a = const, 0 <= a_i <= upper_i,
// with second-order working-set selection and no shrinking.
SmoResult solve_smo(KernelCache& q, SmoProblem problem);

}  // namespace mi2das

#endif  // MI2DAS_SMO_H_

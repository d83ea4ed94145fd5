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

#ifndef MI2DAS_DETECTORS_H_
#define MI2DAS_DETECTORS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mi2das/dataset.h"
#include "mi2das/matrix.h"
#include "mi2das/smo.h"

namespace mi2das {

enum class DetectorKind { kGmm, kLof, kOcsvm, kIforest };

std::string_view to_string(DetectorKind kind);
std::optional<DetectorKind> parse_detector_kind(std::string_view text);

enum class CovarianceType { kFull, kDiagonal };

struct GmmHyper {
  int nc = 1;
  // Unset: full when dim <= 64 and n >= 10 * dim * nc, else diagonal.
  std::optional<CovarianceType> cov_type;
  double tol = 1e-3;
  int max_iter = 100;
  double reg = 1e-6;
  std::uint64_t seed = 0;
};

struct LofHyper {
  int k = 20;
};

struct OcsvmHyper {
  double nu = 0.1;
  KernelType kernel = KernelType::kRbf;
  std::optional<double> gamma;  // unset: scale_gamma(X)
  double tol = 1e-3;
  std::int64_t max_iter = 10'000'000;
  std::size_t cache_mb = 200;
};

struct IforestHyper {
  int n_trees = 100;
  int subsample = 256;
  std::optional<int> max_depth;  // unset: ceil(log2(subsample))
  std::uint64_t seed = 0;
};

using DetectorHyper = std::variant<GmmHyper, LofHyper, OcsvmHyper, IforestHyper>;

DetectorKind kind_of(const DetectorHyper& hyper);

// ---------------------------------------------------------------------------

class GaussianMixture {
 public:
  // EM from a k-means++ seeding followed by one hard-assignment M-step.
  // Throws NumericalError when a covariance stays singular despite `reg`.
  static GaussianMixture fit(const Matrix& x, const GmmHyper& hyper);

  // log sum_k w_k N(x; mu_k, Sigma_k)
  double log_density(std::span<const double> x) const;
  std::vector<double> responsibilities(std::span<const double> x) const;

  int components() const { return static_cast<int>(weights_.size()); }
  std::size_t dim() const { return dim_; }
  CovarianceType covariance_type() const { return cov_type_; }
  const std::vector<double>& weights() const { return weights_; }
  std::span<const double> mean(int k) const;
  // Full: dim*dim row-major; diagonal: dim variances.
  std::span<const double> covariance(int k) const;

  // Mean per-sample log-likelihood of the parameters entering each E-step,
  // followed by that of the final parameters.
  const std::vector<double>& log_likelihood_history() const { return history_; }
  bool converged() const { return converged_; }

  nlohmann::json to_json() const;
  static GaussianMixture from_json(const nlohmann::json& j);

 private:
  void set_parameters(std::vector<double> weights, std::vector<double> means,
                      std::vector<double> covs);
  double component_log_density(int k, std::span<const double> x) const;

  std::size_t dim_ = 0;
  CovarianceType cov_type_ = CovarianceType::kFull;
  std::vector<double> weights_;
  std::vector<double> means_;
  std::vector<double> covs_;
  // Lower Cholesky factor per component (full) or stddevs (diagonal).
  std::vector<double> factors_;
  std::vector<double> log_norm_;  // -0.5 (d ln 2pi + ln det Sigma_k)
  std::vector<double> history_;
  bool converged_ = false;
};

class LocalOutlierFactor {
 public:
  static LocalOutlierFactor fit(const Matrix& x, const LofHyper& hyper);

  // LOF of a query point against the training set.
  double lof(std::span<const double> x) const;
  // LOF of training point i with itself excluded from its neighborhood.
  double training_lof(std::size_t i) const { return training_lof_[i]; }
  const std::vector<double>& training_lofs() const { return training_lof_; }
  double k_distance(std::size_t i) const { return k_distance_[i]; }
  double local_reachability_density(std::size_t i) const { return lrd_[i]; }
  int k() const { return k_; }
  std::size_t dim() const { return train_.cols(); }

  nlohmann::json to_json() const;
  static LocalOutlierFactor from_json(const nlohmann::json& j);

 private:
  // k nearest training points as (distance, index), ties broken by index.
  std::vector<std::pair<double, std::size_t>> neighbors(
      std::span<const double> x, std::optional<std::size_t> exclude) const;
  double lof_from_neighbors(
      const std::vector<std::pair<double, std::size_t>>& nbrs) const;

  int k_ = 0;
  Matrix train_;
  std::vector<double> k_distance_;
  std::vector<double> lrd_;
  std::vector<double> training_lof_;
};

class OneClassSvm {
 public:
  static OneClassSvm fit(const Matrix& x, const OcsvmHyper& hyper);

  // sum_i alpha_i K(sv_i, x) - rho; positive inside the boundary.
  double decision(std::span<const double> x) const;

  // Dual coefficients of every training point (zero for non-support
  // vectors), scaled so that they lie in [0, 1/(nu n)] and sum to 1.
  const std::vector<double>& dual_coefficients() const { return alpha_; }
  double rho() const { return rho_; }
  const Kernel& kernel() const { return kernel_; }
  std::size_t support_size() const { return support_.rows(); }
  bool converged() const { return converged_; }
  std::size_t dim() const { return dim_; }

  nlohmann::json to_json() const;
  static OneClassSvm from_json(const nlohmann::json& j);

 private:
  std::size_t dim_ = 0;
  Kernel kernel_;
  std::vector<double> alpha_;
  Matrix support_;
  std::vector<double> support_coef_;
  double rho_ = 0.0;
  bool converged_ = false;
};

class IsolationForest {
 public:
  struct Node {
    int feature = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
    int size = 0;
  };

  static IsolationForest fit(const Matrix& x, const IforestHyper& hyper);

  // Mean isolation depth over the trees, including the c(size) leaf term.
  double expected_path_length(std::span<const double> x) const;
  // 2^(-E[h(x)] / c(subsample)), in (0, 1); larger is more anomalous.
  double anomaly_score(std::span<const double> x) const;

  int subsample() const { return subsample_; }
  std::size_t dim() const { return dim_; }
  const std::vector<std::vector<Node>>& trees() const { return trees_; }

  // Exact harmonic number H(n).
  static double harmonic(std::size_t n);
  // Average unsuccessful-search path length c(n) of a binary search tree.
  static double average_path_length(std::size_t n);

  nlohmann::json to_json() const;
  static IsolationForest from_json(const nlohmann::json& j);

 private:
  std::size_t dim_ = 0;
  int subsample_ = 0;
  std::vector<std::vector<Node>> trees_;
};

// ---------------------------------------------------------------------------

enum class Verdict { kInlier, kOutlier };

// Fitted detector with the "higher score = more normal" convention.
class DetectorModel {
 public:
  using Impl =
      std::variant<GaussianMixture, LocalOutlierFactor, OneClassSvm, IsolationForest>;

  DetectorModel(DetectorHyper hyper, Impl impl, std::string fingerprint);

  DetectorKind kind() const { return kind_of(hyper_); }
  const DetectorHyper& hyper() const { return hyper_; }
  const Impl& impl() const { return impl_; }
  std::size_t dim() const;
  // SHA-256 of the fitting matrix.
  const std::string& fingerprint() const { return fingerprint_; }

  // GMM: log-likelihood. LOF: -LOF. OCSVM: decision value.
  // IFOREST: -anomaly score. Throws InvalidArgument on width mismatch.
  double score(std::span<const double> x) const;

  std::optional<double> threshold() const { return threshold_; }
  std::optional<double> threshold_percentile() const { return th_per_; }
  void set_threshold(double threshold, double th_per);

  // Outlier iff score < threshold. Throws std::logic_error when the
  // threshold has not been calibrated.
  Verdict predict(std::span<const double> x) const;

 private:
  DetectorHyper hyper_;
  Impl impl_;
  std::string fingerprint_;
  std::optional<double> threshold_;
  std::optional<double> th_per_;
};

DetectorModel fit_detector(const Matrix& x, const DetectorHyper& hyper);
DetectorModel fit_detector(const Dataset& x, const DetectorHyper& hyper);

// Sets the threshold to the th_per-th percentile (linear interpolation) of
// the calibration scores. When `calibration` is the fitting set, LOF uses
// in-sample factors that exclude each point from its own neighborhood.
DetectorModel calibrate_threshold(DetectorModel model, const Dataset& calibration,
                                  double th_per);
DetectorModel calibrate_threshold(DetectorModel model, const Matrix& calibration,
                                  double th_per);

// q-th percentile (q in [0, 100]) with linear interpolation between order
// statistics.
double percentile(std::vector<double> values, double q);

std::string matrix_fingerprint(const Matrix& x);

nlohmann::json hyper_to_json(const DetectorHyper& hyper);
DetectorHyper detector_hyper_from_json(const nlohmann::json& j);

// Versioned envelope: kind, hyperparameters, fitted parameters, threshold,
// score direction, training-data fingerprint.
nlohmann::json to_json(const DetectorModel& model);
DetectorModel detector_from_json(const nlohmann::json& j);

}  // namespace mi2das

#endif  // MI2DAS_DETECTORS_H_

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

#include <Eigen/Dense>

#include <cfloat>
#include <cmath>
#include <limits>
#include <numbers>

#include "mi2das/detectors.h"
#include "mi2das/errors.h"
#include "mi2das/rng.h"

namespace mi2das {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

std::vector<double> kmeans_plus_plus(const Matrix& x, int k, Rng& rng) {
  const std::size_t n = x.rows();
  std::vector<double> centers;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  auto push = [&](std::size_t i) {
    const auto r = x.row(i);
    centers.insert(centers.end(), r.begin(), r.end());
  };
  push(pick);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), x.row(pick));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    push(pick);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(x.row(i), x.row(pick)));
    }
  }
  return centers;
}

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double e : v) m = std::max(m, e);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double e : v) s += std::exp(e - m);
  return m + std::log(s);
}

}  // namespace

std::span<const double> GaussianMixture::mean(int k) const {
  return {means_.data() + static_cast<std::size_t>(k) * dim_, dim_};
}

std::span<const double> GaussianMixture::covariance(int k) const {
  const std::size_t w = cov_type_ == CovarianceType::kFull ? dim_ * dim_ : dim_;
  return {covs_.data() + static_cast<std::size_t>(k) * w, w};
}

void GaussianMixture::set_parameters(std::vector<double> weights,
                                     std::vector<double> means,
                                     std::vector<double> covs) {
  weights_ = std::move(weights);
  means_ = std::move(means);
  covs_ = std::move(covs);
  const int nc = components();
  const auto d = static_cast<Eigen::Index>(dim_);
  factors_.assign(covs_.size(), 0.0);
  log_norm_.assign(static_cast<std::size_t>(nc), 0.0);
  for (int k = 0; k < nc; ++k) {
    double log_det = 0.0;
    if (cov_type_ == CovarianceType::kFull) {
      Eigen::Map<const RowMatrix> cov(covariance(k).data(), d, d);
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("singular covariance in mixture component " +
                             std::to_string(k) + " despite regularization");
      }
      const Eigen::MatrixXd l = llt.matrixL();
      for (Eigen::Index i = 0; i < d; ++i) {
        if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) {
          throw NumericalError("singular covariance in mixture component " +
                               std::to_string(k) + " despite regularization");
        }
        log_det += 2.0 * std::log(l(i, i));
        for (Eigen::Index j = 0; j <= i; ++j) {
          factors_[static_cast<std::size_t>(k) * dim_ * dim_ +
                   static_cast<std::size_t>(i) * dim_ + static_cast<std::size_t>(j)] = l(i, j);
        }
      }
    } else {
      for (std::size_t j = 0; j < dim_; ++j) {
        const double var = covs_[static_cast<std::size_t>(k) * dim_ + j];
        if (!(var > 0.0) || !std::isfinite(var)) {
          throw NumericalError("singular covariance in mixture component " +
                               std::to_string(k) + " despite regularization");
        }
        factors_[static_cast<std::size_t>(k) * dim_ + j] = std::sqrt(var);
        log_det += std::log(var);
      }
    }
    log_norm_[static_cast<std::size_t>(k)] =
        -0.5 * (static_cast<double>(dim_) * kLog2Pi + log_det);
  }
}

double GaussianMixture::component_log_density(int k, std::span<const double> x) const {
  const auto mu = mean(k);
  double maha = 0.0;
  if (cov_type_ == CovarianceType::kFull) {
    // Forward substitution L z = x - mu.
    const double* l = factors_.data() + static_cast<std::size_t>(k) * dim_ * dim_;
    std::vector<double> z(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      double v = x[i] - mu[i];
      for (std::size_t j = 0; j < i; ++j) v -= l[i * dim_ + j] * z[j];
      z[i] = v / l[i * dim_ + i];
      maha += z[i] * z[i];
    }
  } else {
    const double* s = factors_.data() + static_cast<std::size_t>(k) * dim_;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double z = (x[j] - mu[j]) / s[j];
      maha += z * z;
    }
  }
  return log_norm_[static_cast<std::size_t>(k)] - 0.5 * maha;
}

double GaussianMixture::log_density(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw InvalidArgument("GMM expects " + std::to_string(dim_) + " features, got " +
                          std::to_string(x.size()));
  }
  std::vector<double> terms(weights_.size());
  for (int k = 0; k < components(); ++k) {
    terms[k] = std::log(weights_[k]) + component_log_density(k, x);
  }
  return log_sum_exp(terms);
}

std::vector<double> GaussianMixture::responsibilities(std::span<const double> x) const {
  std::vector<double> terms(weights_.size());
  for (int k = 0; k < components(); ++k) {
    terms[k] = std::log(weights_[k]) + component_log_density(k, x);
  }
  const double lse = log_sum_exp(terms);
  for (auto& t : terms) t = std::exp(t - lse);
  return terms;
}

GaussianMixture GaussianMixture::fit(const Matrix& x, const GmmHyper& hyper) {
  if (x.empty()) throw InvalidArgument("GMM needs at least one sample");
  if (hyper.nc < 1) throw InvalidArgument("GMM nc must be >= 1");
  if (!(hyper.reg > 0.0)) throw InvalidArgument("GMM reg must be > 0");
  if (!(hyper.tol > 0.0) || hyper.max_iter < 1) {
    throw InvalidArgument("GMM tol and max_iter must be positive");
  }
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const int nc = hyper.nc;
  if (static_cast<std::size_t>(nc) > n) {
    throw InvalidArgument("GMM nc exceeds the number of samples");
  }

  GaussianMixture gmm;
  gmm.dim_ = d;
  gmm.cov_type_ = hyper.cov_type.value_or(
      d <= 64 && n >= 10 * d * static_cast<std::size_t>(nc) ? CovarianceType::kFull
                                                           : CovarianceType::kDiagonal);
  const bool full = gmm.cov_type_ == CovarianceType::kFull;
  const std::size_t cov_width = full ? d * d : d;
  const ConstRowMap xm(x.data().data(), static_cast<Eigen::Index>(n),
                       static_cast<Eigen::Index>(d));

  // M-step from (soft or hard) responsibilities; resp is n x nc row-major.
  auto m_step = [&](const std::vector<double>& resp) {
    std::vector<double> weights(static_cast<std::size_t>(nc));
    std::vector<double> means(static_cast<std::size_t>(nc) * d, 0.0);
    std::vector<double> covs(static_cast<std::size_t>(nc) * cov_width, 0.0);
    for (int k = 0; k < nc; ++k) {
      Eigen::VectorXd r(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) r[static_cast<Eigen::Index>(i)] = resp[i * nc + k];
      const double nk = r.sum() + 10.0 * DBL_EPSILON;
      weights[k] = nk / static_cast<double>(n);
      const Eigen::RowVectorXd mu = (r.transpose() * xm) / nk;
      std::copy(mu.data(), mu.data() + d, means.begin() + static_cast<std::ptrdiff_t>(k * d));
      const RowMatrix centered = xm.rowwise() - mu;
      double* out = covs.data() + static_cast<std::size_t>(k) * cov_width;
      if (full) {
        const Eigen::MatrixXd cov =
            (centered.transpose() * r.asDiagonal() * centered) / nk;
        for (std::size_t a = 0; a < d; ++a) {
          for (std::size_t b = 0; b < d; ++b) {
            out[a * d + b] = cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +
                             (a == b ? hyper.reg : 0.0);
          }
        }
      } else {
        const Eigen::RowVectorXd var =
            (r.transpose() * centered.array().square().matrix()) / nk;
        for (std::size_t a = 0; a < d; ++a) out[a] = var[static_cast<Eigen::Index>(a)] + hyper.reg;
      }
    }
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    for (double& w : weights) w /= wsum;
    gmm.set_parameters(std::move(weights), std::move(means), std::move(covs));
  };

  // Returns the mean log-likelihood and fills responsibilities.
  std::vector<double> log_prob(n * static_cast<std::size_t>(nc));
  auto e_step = [&](std::vector<double>& resp) {
    for (int k = 0; k < nc; ++k) {
      const double lw = std::log(gmm.weights_[k]);
      const Eigen::Map<const Eigen::RowVectorXd> mu(gmm.mean(k).data(),
                                                    static_cast<Eigen::Index>(d));
      RowMatrix centered = xm.rowwise() - mu;
      Eigen::VectorXd maha;
      if (full) {
        Eigen::Map<const RowMatrix> l(gmm.factors_.data() + static_cast<std::size_t>(k) * d * d,
                                      static_cast<Eigen::Index>(d),
                                      static_cast<Eigen::Index>(d));
        const Eigen::MatrixXd z =
            l.triangularView<Eigen::Lower>().solve(centered.transpose());
        maha = z.colwise().squaredNorm().transpose();
      } else {
        Eigen::Map<const Eigen::RowVectorXd> s(gmm.factors_.data() + static_cast<std::size_t>(k) * d,
                                               static_cast<Eigen::Index>(d));
        maha = (centered.array().rowwise() / s.array()).square().rowwise().sum();
      }
      for (std::size_t i = 0; i < n; ++i) {
        log_prob[i * nc + k] = lw + gmm.log_norm_[k] - 0.5 * maha[static_cast<Eigen::Index>(i)];
      }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const double> row(log_prob.data() + i * nc, static_cast<std::size_t>(nc));
      const double lse = log_sum_exp(row);
      total += lse;
      for (int k = 0; k < nc; ++k) resp[i * nc + k] = std::exp(row[k] - lse);
    }
    return total / static_cast<double>(n);
  };

  // Seeding: k-means++ centers, then one hard-assignment M-step.
  Rng rng(hyper.seed);
  const std::vector<double> centers = kmeans_plus_plus(x, nc, rng);
  std::vector<double> resp(n * static_cast<std::size_t>(nc), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < nc; ++k) {
      const double dist = squared_distance(
          x.row(i), std::span<const double>(centers.data() + static_cast<std::size_t>(k) * d, d));
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    resp[i * nc + best] = 1.0;
  }
  m_step(resp);

  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < hyper.max_iter; ++it) {
    const double ll = e_step(resp);
    if (!std::isfinite(ll)) throw NumericalError("GMM log-likelihood is not finite");
    gmm.history_.push_back(ll);
    m_step(resp);
    if (std::abs(ll - prev) < hyper.tol) {
      gmm.converged_ = true;
      break;
    }
    prev = ll;
  }
  gmm.history_.push_back(e_step(resp));
  return gmm;
}

nlohmann::json GaussianMixture::to_json() const {
  return {{"dim", dim_},
          {"cov_type", cov_type_ == CovarianceType::kFull ? "full" : "diagonal"},
          {"weights", weights_},
          {"means", means_},
          {"covariances", covs_}};
}

GaussianMixture GaussianMixture::from_json(const nlohmann::json& j) {
  GaussianMixture g;
  g.dim_ = j.at("dim").get<std::size_t>();
  g.cov_type_ = j.at("cov_type").get<std::string>() == "full" ? CovarianceType::kFull
                                                              : CovarianceType::kDiagonal;
  g.set_parameters(j.at("weights").get<std::vector<double>>(),
                   j.at("means").get<std::vector<double>>(),
                   j.at("covariances").get<std::vector<double>>());
  return g;
}

}  // namespace mi2das

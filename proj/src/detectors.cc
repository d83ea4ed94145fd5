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

#include "mi2das/detectors.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mi2das/errors.h"
#include "mi2das/hash.h"
#include "mi2das/rng.h"

namespace mi2das {
namespace {

// Floor on the mean reachability distance; reached only by duplicates.
constexpr double kMinReach = 1e-10;

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void check_width(std::size_t expected, std::size_t got, std::string_view who) {
  if (expected != got) {
    throw InvalidArgument(std::string(who) + " expects " + std::to_string(expected) +
                          " features, got " + std::to_string(got));
  }
}

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw DataError("matrix payload has the wrong size");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = data[i * cols + c];
  }
  return m;
}

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw InvalidArgument("unknown detector hyperparameter '" + key + "'");
    }
  }
}

}  // namespace

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::kGmm: return "gmm";
    case DetectorKind::kLof: return "lof";
    case DetectorKind::kOcsvm: return "ocsvm";
    case DetectorKind::kIforest: return "iforest";
  }
  return "?";
}

std::optional<DetectorKind> parse_detector_kind(std::string_view text) {
  const std::string t = lower(text);
  if (t == "gmm") return DetectorKind::kGmm;
  if (t == "lof") return DetectorKind::kLof;
  if (t == "ocsvm" || t == "oc-svm" || t == "one_class_svm") return DetectorKind::kOcsvm;
  if (t == "iforest" || t == "isolation_forest") return DetectorKind::kIforest;
  return std::nullopt;
}

DetectorKind kind_of(const DetectorHyper& hyper) {
  return static_cast<DetectorKind>(hyper.index());
}

// ---------------------------------------------------------------------------
// LOF

std::vector<std::pair<double, std::size_t>> LocalOutlierFactor::neighbors(
    std::span<const double> x, std::optional<std::size_t> exclude) const {
  std::vector<std::pair<double, std::size_t>> all;
  all.reserve(train_.rows());
  for (std::size_t i = 0; i < train_.rows(); ++i) {
    if (exclude && *exclude == i) continue;
    all.emplace_back(std::sqrt(squared_distance(x, train_.row(i))), i);
  }
  const auto k = static_cast<std::size_t>(k_);
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  all.resize(k);
  return all;
}

double LocalOutlierFactor::lof_from_neighbors(
    const std::vector<std::pair<double, std::size_t>>& nbrs) const {
  double reach = 0.0;
  double lrd_sum = 0.0;
  for (const auto& [d, o] : nbrs) {
    reach += std::max(k_distance_[o], d);
    lrd_sum += lrd_[o];
  }
  const double kk = static_cast<double>(nbrs.size());
  const double lrd_x = 1.0 / std::max(reach / kk, kMinReach);
  return (lrd_sum / kk) / lrd_x;
}

LocalOutlierFactor LocalOutlierFactor::fit(const Matrix& x, const LofHyper& hyper) {
  if (hyper.k < 1) throw InvalidArgument("LOF k must be >= 1");
  if (x.rows() <= static_cast<std::size_t>(hyper.k)) {
    throw InvalidArgument("LOF needs more than k=" + std::to_string(hyper.k) +
                          " training points, got " + std::to_string(x.rows()));
  }
  LocalOutlierFactor lof;
  lof.k_ = hyper.k;
  lof.train_ = x;
  const std::size_t n = x.rows();
  std::vector<std::vector<std::pair<double, std::size_t>>> nbrs(n);
  lof.k_distance_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    nbrs[i] = lof.neighbors(x.row(i), i);
    lof.k_distance_[i] = nbrs[i].back().first;
  }
  lof.lrd_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach = 0.0;
    for (const auto& [d, o] : nbrs[i]) reach += std::max(lof.k_distance_[o], d);
    lof.lrd_[i] = 1.0 / std::max(reach / hyper.k, kMinReach);
  }
  lof.training_lof_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const auto& nb : nbrs[i]) s += lof.lrd_[nb.second];
    lof.training_lof_[i] = (s / hyper.k) / lof.lrd_[i];
  }
  return lof;
}

double LocalOutlierFactor::lof(std::span<const double> x) const {
  check_width(dim(), x.size(), "LOF");
  return lof_from_neighbors(neighbors(x, std::nullopt));
}

nlohmann::json LocalOutlierFactor::to_json() const {
  return {{"k", k_},
          {"train", matrix_to_json(train_)},
          {"k_distance", k_distance_},
          {"lrd", lrd_},
          {"training_lof", training_lof_}};
}

LocalOutlierFactor LocalOutlierFactor::from_json(const nlohmann::json& j) {
  LocalOutlierFactor lof;
  lof.k_ = j.at("k").get<int>();
  lof.train_ = matrix_from_json(j.at("train"));
  lof.k_distance_ = j.at("k_distance").get<std::vector<double>>();
  lof.lrd_ = j.at("lrd").get<std::vector<double>>();
  lof.training_lof_ = j.at("training_lof").get<std::vector<double>>();
  const std::size_t n = lof.train_.rows();
  if (lof.k_distance_.size() != n || lof.lrd_.size() != n || lof.training_lof_.size() != n) {
    throw DataError("LOF payload is inconsistent");
  }
  return lof;
}

// ---------------------------------------------------------------------------
// One-class SVM

OneClassSvm OneClassSvm::fit(const Matrix& x, const OcsvmHyper& hyper) {
  if (!(hyper.nu > 0.0 && hyper.nu <= 1.0)) throw InvalidArgument("OCSVM nu must be in (0, 1]");
  if (x.empty()) throw InvalidArgument("OCSVM needs at least one sample");
  if (hyper.gamma && !(*hyper.gamma > 0.0)) throw InvalidArgument("OCSVM gamma must be > 0");
  const std::size_t n = x.rows();
  OneClassSvm svm;
  svm.dim_ = x.cols();
  svm.kernel_ = Kernel{hyper.kernel,
                       hyper.kernel == KernelType::kRbf ? hyper.gamma.value_or(scale_gamma(x))
                                                        : 1.0};
  const double nu_n = hyper.nu * static_cast<double>(n);

  SmoProblem prob;
  prob.p.assign(n, 0.0);
  prob.y.assign(n, 1.0);
  prob.upper.assign(n, 1.0);
  prob.alpha.assign(n, 0.0);
  const auto whole = static_cast<std::size_t>(std::floor(nu_n));
  for (std::size_t i = 0; i < std::min(whole, n); ++i) prob.alpha[i] = 1.0;
  if (whole < n) prob.alpha[whole] = nu_n - static_cast<double>(whole);
  prob.eps = hyper.tol;
  prob.max_iter = hyper.max_iter;

  KernelCache cache(x, prob.y, svm.kernel_, hyper.cache_mb << 20);
  const SmoResult res = solve_smo(cache, std::move(prob));
  svm.converged_ = res.converged;
  svm.rho_ = res.rho / nu_n;
  svm.alpha_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    svm.alpha_[i] = res.alpha[i] / nu_n;
    if (res.alpha[i] > 0.0) {
      svm.support_.append_row(x.row(i));
      svm.support_coef_.push_back(svm.alpha_[i]);
    }
  }
  return svm;
}

double OneClassSvm::decision(std::span<const double> x) const {
  check_width(dim_, x.size(), "OCSVM");
  double s = 0.0;
  for (std::size_t i = 0; i < support_.rows(); ++i) {
    s += support_coef_[i] * kernel_(support_.row(i), x);
  }
  return s - rho_;
}

nlohmann::json OneClassSvm::to_json() const {
  return {{"dim", dim_},
          {"kernel", kernel_.type == KernelType::kRbf ? "rbf" : "linear"},
          {"gamma", kernel_.gamma},
          {"alpha", alpha_},
          {"support", matrix_to_json(support_)},
          {"support_coef", support_coef_},
          {"rho", rho_},
          {"converged", converged_}};
}

OneClassSvm OneClassSvm::from_json(const nlohmann::json& j) {
  OneClassSvm svm;
  svm.dim_ = j.at("dim").get<std::size_t>();
  svm.kernel_.type = j.at("kernel").get<std::string>() == "linear" ? KernelType::kLinear
                                                                    : KernelType::kRbf;
  svm.kernel_.gamma = j.at("gamma").get<double>();
  svm.alpha_ = j.at("alpha").get<std::vector<double>>();
  svm.support_ = matrix_from_json(j.at("support"));
  svm.support_coef_ = j.at("support_coef").get<std::vector<double>>();
  svm.rho_ = j.at("rho").get<double>();
  svm.converged_ = j.at("converged").get<bool>();
  if (svm.support_coef_.size() != svm.support_.rows()) {
    throw DataError("OCSVM payload is inconsistent");
  }
  return svm;
}

// ---------------------------------------------------------------------------
// Isolation forest

double IsolationForest::harmonic(std::size_t n) {
  double h = 0.0;
  for (std::size_t i = n; i >= 1; --i) h += 1.0 / static_cast<double>(i);
  return h;
}

double IsolationForest::average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double nd = static_cast<double>(n);
  return 2.0 * harmonic(n - 1) - 2.0 * (nd - 1.0) / nd;
}

IsolationForest IsolationForest::fit(const Matrix& x, const IforestHyper& hyper) {
  if (hyper.n_trees < 1) throw InvalidArgument("iForest n_trees must be >= 1");
  if (hyper.subsample < 2) throw InvalidArgument("iForest subsample must be >= 2");
  if (static_cast<std::size_t>(hyper.subsample) > x.rows()) {
    throw InvalidArgument("iForest subsample " + std::to_string(hyper.subsample) +
                          " exceeds the " + std::to_string(x.rows()) + " training points");
  }
  if (hyper.max_depth && *hyper.max_depth < 1) {
    throw InvalidArgument("iForest max_depth must be >= 1");
  }
  IsolationForest forest;
  forest.dim_ = x.cols();
  forest.subsample_ = hyper.subsample;
  const int max_depth = hyper.max_depth.value_or(
      static_cast<int>(std::ceil(std::log2(static_cast<double>(hyper.subsample)))));

  for (int t = 0; t < hyper.n_trees; ++t) {
    Rng rng(derive_seed(hyper.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> idx =
        sample_without_replacement(x.rows(), static_cast<std::size_t>(hyper.subsample), rng);
    std::vector<Node> nodes;
    // Iterative build: (node index, begin, end, depth) over idx.
    struct Task {
      int node;
      std::size_t begin, end;
      int depth;
    };
    nodes.push_back({});
    std::vector<Task> stack{{0, 0, idx.size(), 0}};
    while (!stack.empty()) {
      const Task task = stack.back();
      stack.pop_back();
      const int size = static_cast<int>(task.end - task.begin);
      nodes[task.node].size = size;
      if (task.depth >= max_depth || size <= 1) continue;
      std::vector<int> candidates;
      std::vector<double> lo(forest.dim_, std::numeric_limits<double>::infinity());
      std::vector<double> hi(forest.dim_, -std::numeric_limits<double>::infinity());
      for (std::size_t p = task.begin; p < task.end; ++p) {
        const auto r = x.row(idx[p]);
        for (std::size_t f = 0; f < forest.dim_; ++f) {
          lo[f] = std::min(lo[f], r[f]);
          hi[f] = std::max(hi[f], r[f]);
        }
      }
      for (std::size_t f = 0; f < forest.dim_; ++f) {
        if (hi[f] > lo[f]) candidates.push_back(static_cast<int>(f));
      }
      if (candidates.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      const int f = candidates[pick(rng)];
      std::uniform_real_distribution<double> u(lo[f], hi[f]);
      double split = u(rng);
      if (!(split > lo[f])) split = std::nextafter(lo[f], hi[f]);
      const auto mid = std::partition(
          idx.begin() + static_cast<std::ptrdiff_t>(task.begin),
          idx.begin() + static_cast<std::ptrdiff_t>(task.end),
          [&](std::size_t i) { return x(i, static_cast<std::size_t>(f)) < split; });
      const auto m = static_cast<std::size_t>(mid - idx.begin());
      const int left = static_cast<int>(nodes.size());
      nodes.push_back({});
      nodes.push_back({});
      nodes[task.node].feature = f;
      nodes[task.node].split = split;
      nodes[task.node].left = left;
      nodes[task.node].right = left + 1;
      stack.push_back({left + 1, m, task.end, task.depth + 1});
      stack.push_back({left, task.begin, m, task.depth + 1});
    }
    forest.trees_.push_back(std::move(nodes));
  }
  return forest;
}

double IsolationForest::expected_path_length(std::span<const double> x) const {
  check_width(dim_, x.size(), "iForest");
  double total = 0.0;
  for (const auto& tree : trees_) {
    int node = 0;
    int depth = 0;
    while (tree[node].feature >= 0) {
      node = x[static_cast<std::size_t>(tree[node].feature)] < tree[node].split
                 ? tree[node].left
                 : tree[node].right;
      ++depth;
    }
    total += depth + average_path_length(static_cast<std::size_t>(tree[node].size));
  }
  return total / static_cast<double>(trees_.size());
}

double IsolationForest::anomaly_score(std::span<const double> x) const {
  return std::pow(2.0, -expected_path_length(x) /
                           average_path_length(static_cast<std::size_t>(subsample_)));
}

nlohmann::json IsolationForest::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : trees_) {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& nd : tree) t.push_back({nd.feature, nd.split, nd.left, nd.right, nd.size});
    trees.push_back(std::move(t));
  }
  return {{"dim", dim_}, {"subsample", subsample_}, {"trees", std::move(trees)}};
}

IsolationForest IsolationForest::from_json(const nlohmann::json& j) {
  IsolationForest f;
  f.dim_ = j.at("dim").get<std::size_t>();
  f.subsample_ = j.at("subsample").get<int>();
  for (const auto& t : j.at("trees")) {
    std::vector<Node> nodes;
    for (const auto& nd : t) {
      nodes.push_back({nd.at(0).get<int>(), nd.at(1).get<double>(), nd.at(2).get<int>(),
                       nd.at(3).get<int>(), nd.at(4).get<int>()});
    }
    f.trees_.push_back(std::move(nodes));
  }
  return f;
}

// ---------------------------------------------------------------------------
// DetectorModel

DetectorModel::DetectorModel(DetectorHyper hyper, Impl impl, std::string fingerprint)
    : hyper_(std::move(hyper)), impl_(std::move(impl)), fingerprint_(std::move(fingerprint)) {
  if (hyper_.index() != impl_.index()) {
    throw InvalidArgument("detector hyperparameters do not match the fitted model");
  }
}

std::size_t DetectorModel::dim() const {
  return std::visit([](const auto& m) { return m.dim(); }, impl_);
}

double DetectorModel::score(std::span<const double> x) const {
  check_width(dim(), x.size(), "detector");
  switch (impl_.index()) {
    case 0: return std::get<GaussianMixture>(impl_).log_density(x);
    case 1: return -std::get<LocalOutlierFactor>(impl_).lof(x);
    case 2: return std::get<OneClassSvm>(impl_).decision(x);
    default: return -std::get<IsolationForest>(impl_).anomaly_score(x);
  }
}

void DetectorModel::set_threshold(double threshold, double th_per) {
  if (!std::isfinite(threshold)) throw NumericalError("detector threshold is not finite");
  threshold_ = threshold;
  th_per_ = th_per;
}

Verdict DetectorModel::predict(std::span<const double> x) const {
  if (!threshold_) throw std::logic_error("detector threshold has not been calibrated");
  return score(x) < *threshold_ ? Verdict::kOutlier : Verdict::kInlier;
}

DetectorModel fit_detector(const Matrix& x, const DetectorHyper& hyper) {
  std::string fp = matrix_fingerprint(x);
  return std::visit(
      [&](const auto& h) -> DetectorModel {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, GmmHyper>) {
          return {hyper, GaussianMixture::fit(x, h), std::move(fp)};
        } else if constexpr (std::is_same_v<H, LofHyper>) {
          return {hyper, LocalOutlierFactor::fit(x, h), std::move(fp)};
        } else if constexpr (std::is_same_v<H, OcsvmHyper>) {
          return {hyper, OneClassSvm::fit(x, h), std::move(fp)};
        } else {
          return {hyper, IsolationForest::fit(x, h), std::move(fp)};
        }
      },
      hyper);
}

DetectorModel fit_detector(const Dataset& x, const DetectorHyper& hyper) {
  return fit_detector(x.features(), hyper);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw InvalidArgument("percentile q must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

DetectorModel calibrate_threshold(DetectorModel model, const Matrix& calibration,
                                  double th_per) {
  if (calibration.empty()) throw InvalidArgument("empty calibration set");
  std::vector<double> scores;
  const auto* lof = std::get_if<LocalOutlierFactor>(&model.impl());
  if (lof != nullptr && matrix_fingerprint(calibration) == model.fingerprint()) {
    for (double v : lof->training_lofs()) scores.push_back(-v);
  } else {
    scores.reserve(calibration.rows());
    for (std::size_t i = 0; i < calibration.rows(); ++i) {
      scores.push_back(model.score(calibration.row(i)));
    }
  }
  model.set_threshold(percentile(std::move(scores), th_per), th_per);
  return model;
}

DetectorModel calibrate_threshold(DetectorModel model, const Dataset& calibration,
                                  double th_per) {
  return calibrate_threshold(std::move(model), calibration.features(), th_per);
}

std::string matrix_fingerprint(const Matrix& x) {
  Sha256 h;
  h.update_u64(x.rows()).update_u64(x.cols()).update(std::span<const double>(x.data()));
  return h.hex_digest();
}

nlohmann::json hyper_to_json(const DetectorHyper& hyper) {
  return std::visit(
      [](const auto& h) -> nlohmann::json {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, GmmHyper>) {
          nlohmann::json cov = nullptr;
          if (h.cov_type) cov = *h.cov_type == CovarianceType::kFull ? "full" : "diagonal";
          return {{"kind", "gmm"}, {"nc", h.nc},         {"cov_type", cov},
                  {"tol", h.tol},  {"max_iter", h.max_iter}, {"reg", h.reg},
                  {"seed", h.seed}};
        } else if constexpr (std::is_same_v<H, LofHyper>) {
          return {{"kind", "lof"}, {"k", h.k}};
        } else if constexpr (std::is_same_v<H, OcsvmHyper>) {
          nlohmann::json gamma = "scale";
          if (h.gamma) gamma = *h.gamma;
          return {{"kind", "ocsvm"},
                  {"nu", h.nu},
                  {"kernel", h.kernel == KernelType::kRbf ? "rbf" : "linear"},
                  {"gamma", gamma},
                  {"tol", h.tol},
                  {"max_iter", h.max_iter},
                  {"cache_mb", h.cache_mb}};
        } else {
          nlohmann::json depth = nullptr;
          if (h.max_depth) depth = *h.max_depth;
          return {{"kind", "iforest"}, {"n_trees", h.n_trees}, {"subsample", h.subsample},
                  {"max_depth", depth},  {"seed", h.seed}};
        }
      },
      hyper);
}

DetectorHyper detector_hyper_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) {
    throw InvalidArgument("detector hyperparameters need a 'kind'");
  }
  const auto kind = parse_detector_kind(j.at("kind").get<std::string>());
  if (!kind) throw InvalidArgument("unknown detector kind '" + j.at("kind").get<std::string>() + "'");
  switch (*kind) {
    case DetectorKind::kGmm: {
      reject_unknown_keys(j, {"kind", "nc", "cov_type", "tol", "max_iter", "reg", "seed"});
      GmmHyper h;
      h.nc = j.value("nc", h.nc);
      if (j.contains("cov_type") && !j["cov_type"].is_null()) {
        const std::string c = lower(j["cov_type"].get<std::string>());
        if (c == "full") {
          h.cov_type = CovarianceType::kFull;
        } else if (c == "diagonal" || c == "diag") {
          h.cov_type = CovarianceType::kDiagonal;
        } else if (c != "auto") {
          throw InvalidArgument("unknown GMM cov_type '" + c + "'");
        }
      }
      h.tol = j.value("tol", h.tol);
      h.max_iter = j.value("max_iter", h.max_iter);
      h.reg = j.value("reg", h.reg);
      h.seed = j.value("seed", h.seed);
      return h;
    }
    case DetectorKind::kLof: {
      reject_unknown_keys(j, {"kind", "k"});
      LofHyper h;
      h.k = j.value("k", h.k);
      return h;
    }
    case DetectorKind::kOcsvm: {
      reject_unknown_keys(j, {"kind", "nu", "kernel", "gamma", "tol", "max_iter", "cache_mb"});
      OcsvmHyper h;
      h.nu = j.value("nu", h.nu);
      const std::string kernel = lower(j.value("kernel", std::string("rbf")));
      if (kernel == "linear") {
        h.kernel = KernelType::kLinear;
      } else if (kernel != "rbf") {
        throw InvalidArgument("unknown OCSVM kernel '" + kernel + "'");
      }
      if (j.contains("gamma") && j["gamma"].is_number()) h.gamma = j["gamma"].get<double>();
      h.tol = j.value("tol", h.tol);
      h.max_iter = j.value("max_iter", h.max_iter);
      h.cache_mb = j.value("cache_mb", h.cache_mb);
      return h;
    }
    case DetectorKind::kIforest: {
      reject_unknown_keys(j, {"kind", "n_trees", "subsample", "max_depth", "seed"});
      IforestHyper h;
      h.n_trees = j.value("n_trees", h.n_trees);
      h.subsample = j.value("subsample", h.subsample);
      if (j.contains("max_depth") && !j["max_depth"].is_null()) {
        h.max_depth = j["max_depth"].get<int>();
      }
      h.seed = j.value("seed", h.seed);
      return h;
    }
  }
  throw InvalidArgument("unknown detector kind");
}

nlohmann::json to_json(const DetectorModel& model) {
  nlohmann::json params = std::visit([](const auto& m) { return m.to_json(); }, model.impl());
  nlohmann::json j = {{"format", "mi2das.detector"},
                      {"version", 1},
                      {"kind", to_string(model.kind())},
                      {"hyper", hyper_to_json(model.hyper())},
                      {"params", std::move(params)},
                      {"score_direction", "higher_is_normal"},
                      {"fingerprint", model.fingerprint()},
                      {"threshold", nullptr},
                      {"th_per", nullptr}};
  if (model.threshold()) {
    j["threshold"] = *model.threshold();
    j["th_per"] = *model.threshold_percentile();
  }
  return j;
}

DetectorModel detector_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "mi2das.detector") {
    throw DataError("not a serialized detector");
  }
  if (j.value("version", 0) != 1) throw DataError("unsupported detector version");
  DetectorHyper hyper = detector_hyper_from_json(j.at("hyper"));
  const auto& p = j.at("params");
  DetectorModel::Impl impl = [&]() -> DetectorModel::Impl {
    switch (kind_of(hyper)) {
      case DetectorKind::kGmm: return GaussianMixture::from_json(p);
      case DetectorKind::kLof: return LocalOutlierFactor::from_json(p);
      case DetectorKind::kOcsvm: return OneClassSvm::from_json(p);
      case DetectorKind::kIforest: return IsolationForest::from_json(p);
    }
    throw DataError("unknown detector kind");
  }();
  DetectorModel model(std::move(hyper), std::move(impl), j.at("fingerprint").get<std::string>());
  if (!j.at("threshold").is_null()) {
    model.set_threshold(j["threshold"].get<double>(), j.at("th_per").get<double>());
  }
  return model;
}

}  // namespace mi2das

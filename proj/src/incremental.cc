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

#include "mi2das/incremental.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mi2das/errors.h"
#include "mi2das/rng.h"

namespace mi2das {

// ---------------------------------------------------------------------------
// Stores

RecordStore::RecordStore(const Dataset& ds) {
  for (const auto& r : ds.records) add(r);
}

void RecordStore::add(FlowRecord record) {
  if (index_.count(record.id) != 0) {
    throw InvalidArgument("record id " + std::to_string(record.id) + " already stored");
  }
  if (!records_.empty() && record.features.size() != records_.front().features.size()) {
    throw InvalidArgument("record width differs from the store");
  }
  index_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
}

const FlowRecord& RecordStore::get(std::uint64_t id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw InvalidArgument("unknown record id " + std::to_string(id));
  return records_[it->second];
}

std::size_t RecordStore::dim() const {
  return records_.empty() ? 0 : records_.front().features.size();
}

Matrix RecordStore::features(std::span<const std::uint64_t> ids) const {
  Matrix m(ids.size(), dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& f = get(ids[i]).features;
    std::copy(f.begin(), f.end(), m.row(i).begin());
  }
  return m;
}

std::vector<std::uint64_t> RecordStore::ids() const {
  std::vector<std::uint64_t> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  std::sort(out.begin(), out.end());
  return out;
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kKnownPool: return "known_pool";
    case Provenance::kSeed: return "seed";
    case Provenance::kPseudoLabel: return "pseudo_label";
    case Provenance::kOracleQuery: return "oracle_query";
  }
  return "?";
}

std::optional<Provenance> parse_provenance(std::string_view text) {
  for (Provenance p : {Provenance::kKnownPool, Provenance::kSeed, Provenance::kPseudoLabel,
                       Provenance::kOracleQuery}) {
    if (to_string(p) == text) return p;
  }
  return std::nullopt;
}

void LabeledSet::add(LabeledEntry entry) {
  if (index_.count(entry.id) != 0) {
    throw InvalidArgument("id " + std::to_string(entry.id) + " is already labeled");
  }
  if (entry.label == ClassLabel::kUnknown) throw InvalidArgument("labeled entries cannot be Unknown");
  if (entry.provenance == Provenance::kPseudoLabel && !entry.confidence) {
    throw InvalidArgument("pseudo-labels must carry their confidence");
  }
  index_.emplace(entry.id, entries_.size());
  entries_.push_back(entry);
}

std::map<Provenance, std::size_t> LabeledSet::by_provenance() const {
  std::map<Provenance, std::size_t> out{{Provenance::kKnownPool, 0},
                                        {Provenance::kSeed, 0},
                                        {Provenance::kPseudoLabel, 0},
                                        {Provenance::kOracleQuery, 0}};
  for (const auto& e : entries_) ++out[e.provenance];
  return out;
}

std::vector<ClassLabel> LabeledSet::classes() const {
  std::set<ClassLabel> s;
  for (const auto& e : entries_) s.insert(e.label);
  return {s.begin(), s.end()};
}

std::vector<std::uint64_t> LabeledSet::ids() const {
  std::vector<std::uint64_t> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.id);
  std::sort(out.begin(), out.end());
  return out;
}

void LabeledSet::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].id, i);
}

UnknownPool::UnknownPool(std::vector<std::uint64_t> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  if (std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end()) {
    throw InvalidArgument("pool ids must be distinct");
  }
}

bool UnknownPool::contains(std::uint64_t id) const {
  return std::binary_search(ids_.begin(), ids_.end(), id);
}

void UnknownPool::insert(std::span<const std::uint64_t> ids) {
  std::vector<std::uint64_t> add(ids.begin(), ids.end());
  std::sort(add.begin(), add.end());
  std::vector<std::uint64_t> merged;
  merged.reserve(ids_.size() + add.size());
  std::merge(ids_.begin(), ids_.end(), add.begin(), add.end(), std::back_inserter(merged));
  if (std::adjacent_find(merged.begin(), merged.end()) != merged.end()) {
    throw InvalidArgument("id inserted into the pool twice");
  }
  ids_ = std::move(merged);
}

std::size_t UnknownPool::remove(std::span<const std::uint64_t> ids) {
  std::vector<std::uint64_t> drop(ids.begin(), ids.end());
  std::sort(drop.begin(), drop.end());
  std::vector<std::uint64_t> kept;
  kept.reserve(ids_.size());
  std::set_difference(ids_.begin(), ids_.end(), drop.begin(), drop.end(),
                      std::back_inserter(kept));
  const std::size_t removed = ids_.size() - kept.size();
  ids_ = std::move(kept);
  return removed;
}

GroundTruthOracle::GroundTruthOracle(const Dataset& ds) {
  for (const auto& r : ds.records) {
    if (r.label) labels_.emplace(r.id, *r.label);
  }
}

std::optional<ClassLabel> GroundTruthOracle::label(std::uint64_t id) {
  ++calls_;
  if (std::binary_search(abstain_.begin(), abstain_.end(), id)) return std::nullopt;
  const auto it = labels_.find(id);
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

void GroundTruthOracle::abstain_on(std::vector<std::uint64_t> ids) {
  abstain_ = std::move(ids);
  std::sort(abstain_.begin(), abstain_.end());
}

// ---------------------------------------------------------------------------
// Seeds, self-training, active learning

SeedSet init_seed_set(UnknownPool& pool, Oracle& oracle,
                      const std::vector<ClassLabel>& new_classes, int per_class_count,
                      std::uint64_t seed, int step) {
  if (per_class_count < 1) throw InvalidArgument("per_class_count must be >= 1");
  SeedSet out;
  out.per_class_count = per_class_count;
  std::map<ClassLabel, std::vector<std::uint64_t>> candidates;
  for (ClassLabel c : new_classes) candidates[c];
  if (!new_classes.empty()) {
    for (std::uint64_t id : pool.ids()) {
      const auto label = oracle.label(id);
      if (!label) continue;
      const auto it = candidates.find(*label);
      if (it != candidates.end()) it->second.push_back(id);
    }
  }
  std::vector<std::uint64_t> taken;
  for (auto& [c, ids] : candidates) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label_index(c))));
    const std::size_t want = std::min(ids.size(), static_cast<std::size_t>(per_class_count));
    std::vector<std::uint64_t> chosen;
    for (std::size_t p : sample_without_replacement(ids.size(), want, rng)) chosen.push_back(ids[p]);
    std::sort(chosen.begin(), chosen.end());
    for (std::uint64_t id : chosen) {
      out.samples.push_back({id, c, Provenance::kSeed, std::nullopt, step});
      taken.push_back(id);
    }
    if (want < static_cast<std::size_t>(per_class_count)) out.shortfall[c] = want;
  }
  pool.remove(taken);
  return out;
}

std::vector<PseudoLabel> self_training_round(const ClassifierModel& clf,
                                             const RecordStore& store, UnknownPool& pool,
                                             double threshold) {
  std::vector<PseudoLabel> accepted;
  std::vector<std::uint64_t> ids;
  for (std::uint64_t id : pool.ids()) {
    const auto p = clf.predict_proba(store.get(id).features);
    const std::size_t best = argmax(p);
    if (p[best] >= threshold) {
      accepted.push_back({id, clf.classes()[best], p[best]});
      ids.push_back(id);
    }
  }
  pool.remove(ids);
  return accepted;
}

std::string_view to_string(AlStrategy s) {
  switch (s) {
    case AlStrategy::kLeastConfidence: return "least_confidence";
    case AlStrategy::kMargin: return "margin";
    case AlStrategy::kEntropy: return "entropy";
  }
  return "?";
}

std::optional<AlStrategy> parse_al_strategy(std::string_view text) {
  for (AlStrategy s : {AlStrategy::kLeastConfidence, AlStrategy::kMargin, AlStrategy::kEntropy}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

double uncertainty(std::span<const double> p, AlStrategy strategy) {
  switch (strategy) {
    case AlStrategy::kLeastConfidence:
      return 1.0 - *std::max_element(p.begin(), p.end());
    case AlStrategy::kMargin: {
      double a = -std::numeric_limits<double>::infinity(), b = a;
      for (double v : p) {
        if (v > a) {
          b = a;
          a = v;
        } else if (v > b) {
          b = v;
        }
      }
      return p.size() < 2 ? -a : -(a - b);
    }
    case AlStrategy::kEntropy: {
      double h = 0.0;
      for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
      }
      return h;
    }
  }
  return 0.0;
}

QueryBatch al_select(const ClassifierModel& clf, const RecordStore& store,
                     const UnknownPool& pool, AlStrategy strategy, std::size_t batch) {
  if (pool.empty()) throw InvalidArgument("active learning on an empty pool");
  std::vector<std::pair<double, std::uint64_t>> scored;
  scored.reserve(pool.size());
  for (std::uint64_t id : pool.ids()) {
    scored.emplace_back(uncertainty(clf.predict_proba(store.get(id).features), strategy), id);
  }
  QueryBatch q;
  q.strategy = strategy;
  q.truncated = batch > scored.size();
  const std::size_t take = std::min(batch, scored.size());
  auto cmp = [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), cmp);
  for (std::size_t i = 0; i < take; ++i) {
    q.ids.push_back(scored[i].second);
    q.uncertainties.push_back(scored[i].first);
  }
  return q;
}

IngestResult al_ingest(const QueryBatch& q, Oracle& oracle, int step) {
  IngestResult out;
  for (std::uint64_t id : q.ids) {
    const auto label = oracle.label(id);
    if (label && *label != ClassLabel::kUnknown) {
      out.labeled.push_back({id, *label, Provenance::kOracleQuery, std::nullopt, step});
    } else {
      out.abstained.push_back(id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph inference

LabelGraph build_label_graph(const Matrix& x, int n_neighbors, double gamma) {
  const std::size_t n = x.rows();
  if (n_neighbors < 1) throw InvalidArgument("n_neighbors must be >= 1");
  if (n < static_cast<std::size_t>(n_neighbors) + 1) {
    throw InvalidArgument("graph needs at least n_neighbors + 1 nodes");
  }
  const auto k = static_cast<std::size_t>(n_neighbors);
  std::vector<std::map<std::size_t, double>> edges(n);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand.emplace_back(squared_distance(x.row(i), x.row(j)), j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t t = 0; t < k; ++t) {
      const double w = std::exp(-gamma * cand[t].first);
      edges[i][cand[t].second] = w;
      edges[cand[t].second][i] = w;
    }
  }
  LabelGraph g;
  g.n = n;
  g.adj.resize(n);
  g.degree.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [j, w] : edges[i]) {
      g.adj[i].emplace_back(j, w);
      g.degree[i] += w;
    }
  }
  return g;
}

std::vector<double> diffusion_step(const LabelGraph& g, std::span<const double> f,
                                   std::span<const double> y0, std::span<const char> labeled,
                                   std::size_t k, GraphVariant variant, double alpha) {
  std::vector<double> out(g.n * k, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) {
    double* row = out.data() + i * k;
    if (variant == GraphVariant::kPropagation) {
      if (labeled[i]) {
        std::copy(y0.begin() + static_cast<std::ptrdiff_t>(i * k),
                  y0.begin() + static_cast<std::ptrdiff_t>((i + 1) * k), row);
        continue;
      }
      if (g.degree[i] <= 0.0) continue;
      for (const auto& [j, w] : g.adj[i]) {
        const double c = w / g.degree[i];
        for (std::size_t c2 = 0; c2 < k; ++c2) row[c2] += c * f[j * k + c2];
      }
    } else {
      if (g.degree[i] > 0.0) {
        for (const auto& [j, w] : g.adj[i]) {
          if (g.degree[j] <= 0.0) continue;
          const double c = alpha * w / std::sqrt(g.degree[i] * g.degree[j]);
          for (std::size_t c2 = 0; c2 < k; ++c2) row[c2] += c * f[j * k + c2];
        }
      }
      for (std::size_t c2 = 0; c2 < k; ++c2) row[c2] += (1.0 - alpha) * y0[i * k + c2];
    }
  }
  return out;
}

Diffusion diffuse(const LabelGraph& g, std::span<const double> y0, std::span<const char> labeled,
                  std::size_t k, GraphVariant variant, double alpha, double tol, int max_iter) {
  Diffusion d;
  d.f.assign(y0.begin(), y0.end());
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> next = diffusion_step(g, d.f, y0, labeled, k, variant, alpha);
    double change = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) change = std::max(change, std::abs(next[i] - d.f[i]));
    d.f = std::move(next);
    d.iterations = it + 1;
    d.last_change = change;
    if (change < tol) {
      d.converged = true;
      break;
    }
  }
  return d;
}

std::vector<GraphInference> graph_label_inference(const RecordStore& store,
                                                  const LabeledSet& labeled,
                                                  const UnknownPool& pool,
                                                  const GraphConfig& cfg, GraphVariant variant,
                                                  std::uint64_t seed) {
  if (labeled.size() == 0) throw InvalidArgument("graph inference needs labeled samples");
  if (pool.empty()) return {};
  const std::vector<ClassLabel> classes = labeled.classes();
  const std::size_t k = classes.size();
  Rng rng(seed);

  std::vector<const LabeledEntry*> lab;
  std::vector<std::uint64_t> unl = pool.ids();
  const std::size_t total = labeled.size() + unl.size();
  if (total <= cfg.max_nodes) {
    for (const auto& e : labeled.entries()) lab.push_back(&e);
  } else {
    // Stratified labeled share with every class represented.
    std::map<ClassLabel, std::vector<const LabeledEntry*>> by_class;
    for (const auto& e : labeled.entries()) by_class[e.label].push_back(&e);
    const double share = static_cast<double>(cfg.max_nodes) * static_cast<double>(labeled.size()) /
                         static_cast<double>(total);
    for (auto& [c, es] : by_class) {
      const auto want = std::clamp<std::size_t>(
          static_cast<std::size_t>(share * static_cast<double>(es.size()) /
                                   static_cast<double>(labeled.size())),
          1, es.size());
      for (std::size_t p : sample_without_replacement(es.size(), want, rng)) lab.push_back(es[p]);
    }
    std::sort(lab.begin(), lab.end(),
              [](const LabeledEntry* a, const LabeledEntry* b) { return a->id < b->id; });
    const std::size_t room = cfg.max_nodes > lab.size() ? cfg.max_nodes - lab.size() : 0;
    if (room < unl.size()) {
      std::vector<std::uint64_t> picked;
      for (std::size_t p : sample_without_replacement(unl.size(), room, rng)) picked.push_back(unl[p]);
      std::sort(picked.begin(), picked.end());
      unl = std::move(picked);
    }
  }
  if (unl.empty()) return {};

  const std::size_t n = lab.size() + unl.size();
  Matrix x(n, store.dim());
  std::vector<double> y0(n * k, 0.0);
  std::vector<char> is_labeled(n, 0);
  for (std::size_t i = 0; i < lab.size(); ++i) {
    const auto& f = store.get(lab[i]->id).features;
    std::copy(f.begin(), f.end(), x.row(i).begin());
    const auto c = static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), lab[i]->label) - classes.begin());
    y0[i * k + c] = 1.0;
    is_labeled[i] = 1;
  }
  for (std::size_t i = 0; i < unl.size(); ++i) {
    const auto& f = store.get(unl[i]).features;
    std::copy(f.begin(), f.end(), x.row(lab.size() + i).begin());
  }
  const double gamma = cfg.rbf_gamma.value_or(1.0 / static_cast<double>(store.dim()));
  const LabelGraph g = build_label_graph(x, cfg.n_neighbors, gamma);
  const Diffusion d = diffuse(g, y0, is_labeled, k, variant, cfg.alpha, cfg.tol, cfg.max_iter);

  std::vector<GraphInference> out;
  out.reserve(unl.size());
  for (std::size_t i = 0; i < unl.size(); ++i) {
    const std::size_t row = lab.size() + i;
    std::vector<double> dist(d.f.begin() + static_cast<std::ptrdiff_t>(row * k),
                             d.f.begin() + static_cast<std::ptrdiff_t>((row + 1) * k));
    double s = 0.0;
    for (double v : dist) s += v;
    if (s > 0.0) {
      for (double& v : dist) v /= s;
    } else {
      std::fill(dist.begin(), dist.end(), 1.0 / static_cast<double>(k));
    }
    const std::size_t best = argmax(dist);
    out.push_back({unl[i], classes[best], dist[best], std::move(dist)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

std::string_view to_string(UpdateStrategy s) {
  switch (s) {
    case UpdateStrategy::kSelfTraining: return "self_training";
    case UpdateStrategy::kLabelPropagation: return "label_propagation";
    case UpdateStrategy::kLabelSpreading: return "label_spreading";
    case UpdateStrategy::kActiveLearning: return "active_learning";
  }
  return "?";
}

std::optional<UpdateStrategy> parse_update_strategy(std::string_view text) {
  for (UpdateStrategy s : {UpdateStrategy::kSelfTraining, UpdateStrategy::kLabelPropagation,
                           UpdateStrategy::kLabelSpreading, UpdateStrategy::kActiveLearning}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

std::string_view to_string(TrainingLogic l) {
  return l == TrainingLogic::kSeedBased ? "seed_based" : "augmentation";
}

std::optional<TrainingLogic> parse_training_logic(std::string_view text) {
  if (text == "seed_based") return TrainingLogic::kSeedBased;
  if (text == "augmentation") return TrainingLogic::kAugmentation;
  return std::nullopt;
}

void UpdateConfig::validate() const {
  if (!(confidence_threshold > 0.0 && confidence_threshold < 1.0)) {
    throw InvalidArgument("confidence_threshold must be in (0, 1)");
  }
  if (!(graph.alpha > 0.0 && graph.alpha < 1.0)) throw InvalidArgument("graph alpha must be in (0, 1)");
  if (graph.rbf_gamma && !(*graph.rbf_gamma > 0.0)) throw InvalidArgument("rbf_gamma must be > 0");
  if (graph.n_neighbors < 1 || graph.max_nodes < 2 || graph.max_iter < 1 || !(graph.tol > 0.0)) {
    throw InvalidArgument("invalid graph settings");
  }
  if (seeds_per_class < 1) throw InvalidArgument("seeds_per_class must be >= 1");
  if (al_batch_size < 1 || al_budget < 1) throw InvalidArgument("AL batch and budget must be >= 1");
  if (max_rounds < 1) throw InvalidArgument("max_rounds must be >= 1");
  if (convergence.patience < 1) throw InvalidArgument("patience must be >= 1");
  if (!(convergence.min_pool_drain_fraction >= 0.0 && convergence.min_pool_drain_fraction < 1.0)) {
    throw InvalidArgument("min_pool_drain_fraction must be in [0, 1)");
  }
}

nlohmann::json to_json(const UpdateConfig& cfg) {
  nlohmann::json gamma = nullptr;
  if (cfg.graph.rbf_gamma) gamma = *cfg.graph.rbf_gamma;
  nlohmann::json weights = nlohmann::json::object();
  for (const auto& [c, w] : cfg.classifier.class_weight) weights[std::string(to_string(c))] = w;
  return {{"strategy", to_string(cfg.strategy)},
          {"training_logic", to_string(cfg.training_logic)},
          {"confidence_threshold", cfg.confidence_threshold},
          {"seeds_per_class", cfg.seeds_per_class},
          {"al_batch_size", cfg.al_batch_size},
          {"al_budget", cfg.al_budget},
          {"al_strategy", to_string(cfg.al_strategy)},
          {"max_rounds", cfg.max_rounds},
          {"convergence",
           {{"min_pool_drain_fraction", cfg.convergence.min_pool_drain_fraction},
            {"patience", cfg.convergence.patience}}},
          {"graph",
           {{"n_neighbors", cfg.graph.n_neighbors},
            {"rbf_gamma", gamma},
            {"alpha", cfg.graph.alpha},
            {"max_nodes", cfg.graph.max_nodes},
            {"tol", cfg.graph.tol},
            {"max_iter", cfg.graph.max_iter}}},
          {"classifier", hyper_to_json(cfg.classifier.hyper)},
          {"class_weight", weights},
          {"seed", cfg.seed}};
}

UpdateConfig update_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {
      "strategy",  "training_logic", "confidence_threshold", "seeds_per_class",
      "al_batch_size", "al_budget",  "al_strategy",          "max_rounds",
      "convergence",   "graph",      "classifier",           "class_weight",
      "seed"};
  for (const auto& [key, v] : j.items()) {
    if (kKeys.count(key) == 0) throw InvalidArgument("unknown update setting '" + key + "'");
  }
  UpdateConfig c;
  if (j.contains("strategy")) {
    const auto s = parse_update_strategy(j["strategy"].get<std::string>());
    if (!s) throw InvalidArgument("unknown strategy '" + j["strategy"].get<std::string>() + "'");
    c.strategy = *s;
  }
  if (j.contains("training_logic")) {
    const auto l = parse_training_logic(j["training_logic"].get<std::string>());
    if (!l) throw InvalidArgument("unknown training_logic");
    c.training_logic = *l;
  }
  if (j.contains("al_strategy")) {
    const auto s = parse_al_strategy(j["al_strategy"].get<std::string>());
    if (!s) throw InvalidArgument("unknown al_strategy");
    c.al_strategy = *s;
  }
  c.confidence_threshold = j.value("confidence_threshold", c.confidence_threshold);
  c.seeds_per_class = j.value("seeds_per_class", c.seeds_per_class);
  c.al_batch_size = j.value("al_batch_size", c.al_batch_size);
  c.al_budget = j.value("al_budget", c.al_budget);
  c.max_rounds = j.value("max_rounds", c.max_rounds);
  c.seed = j.value("seed", c.seed);
  if (j.contains("convergence")) {
    const auto& cv = j["convergence"];
    c.convergence.min_pool_drain_fraction =
        cv.value("min_pool_drain_fraction", c.convergence.min_pool_drain_fraction);
    c.convergence.patience = cv.value("patience", c.convergence.patience);
  }
  if (j.contains("graph")) {
    const auto& g = j["graph"];
    c.graph.n_neighbors = g.value("n_neighbors", c.graph.n_neighbors);
    if (g.contains("rbf_gamma") && !g["rbf_gamma"].is_null()) {
      c.graph.rbf_gamma = g["rbf_gamma"].get<double>();
    }
    c.graph.alpha = g.value("alpha", c.graph.alpha);
    c.graph.max_nodes = g.value("max_nodes", c.graph.max_nodes);
    c.graph.tol = g.value("tol", c.graph.tol);
    c.graph.max_iter = g.value("max_iter", c.graph.max_iter);
  }
  if (j.contains("classifier")) c.classifier.hyper = classifier_hyper_from_json(j["classifier"]);
  if (j.contains("class_weight")) {
    for (const auto& [name, w] : j["class_weight"].items()) {
      const auto label = parse_ground_truth(name);
      if (!label) throw InvalidArgument("unknown class '" + name + "' in class_weight");
      c.classifier.class_weight[*label] = w.get<double>();
    }
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const IterationReport& r, bool include_timing) {
  nlohmann::json labeled = nlohmann::json::object();
  for (const auto& [p, n] : r.labeled) labeled[std::string(to_string(p))] = n;
  nlohmann::json j = {{"step", r.step},
                      {"step_label", r.step_label},
                      {"round", r.round},
                      {"labeled", labeled},
                      {"labeled_total", r.labeled_total},
                      {"pool_start", r.pool_start},
                      {"pool_remaining", r.pool_remaining},
                      {"accepted", r.accepted},
                      {"queried", r.queried},
                      {"abstained", r.abstained},
                      {"oracle_queries_used", r.oracle_queries_used},
                      {"set_aside", r.set_aside},
                      {"introduced", r.introduced},
                      {"classes", label_names(r.classes)},
                      {"unreachable", label_names(r.unreachable)},
                      {"metrics", to_json(r.metrics)}};
  if (include_timing) j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

bool check_convergence(std::span<const IterationReport> history, const ConvergenceConfig& cfg,
                       bool al_budget_exhausted) {
  if (history.empty()) return false;
  if (al_budget_exhausted) return true;
  const auto& last = history.back();
  if (last.pool_remaining == 0 ||
      static_cast<double>(last.pool_remaining) <
          cfg.min_pool_drain_fraction * static_cast<double>(last.pool_start)) {
    return true;
  }
  int stalled = 0;
  for (auto it = history.rbegin(); it != history.rend() && it->accepted == 0; ++it) ++stalled;
  return stalled >= cfg.patience;
}

// ---------------------------------------------------------------------------
// Schedules

void validate_schedule(const Schedule& schedule) {
  if (schedule.size() < 2) throw InvalidArgument("schedule needs at least two states");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const auto [k, u] = schedule[i];
    if (k < 1 || u < 0 || k + u != kNumAttackClasses) {
      throw InvalidArgument("schedule state " + step_label(k, u) + " must split the " +
                            std::to_string(kNumAttackClasses) + " attack classes");
    }
    if (i > 0 && k <= schedule[i - 1].first) {
      throw InvalidArgument("schedule must strictly increase the known count");
    }
  }
  if (schedule.back().first != kNumAttackClasses) {
    throw InvalidArgument("schedule must end with every attack class known");
  }
}

std::string step_label(int n_known, int n_unknown) {
  return std::to_string(n_known) + "K+" + std::to_string(n_unknown) + "U";
}

std::vector<IterationReport> IncrementalRun::reports() const {
  std::vector<IterationReport> out;
  for (const auto& s : steps) {
    if (!s.rounds.empty()) out.push_back(s.rounds.back());
  }
  return out;
}

MetricBlock evaluate_classifier(const ClassifierModel& clf, const Dataset& test) {
  const auto& classes = clf.classes();
  std::vector<ClassLabel> truth, pred;
  for (const auto& r : test.records) {
    if (!r.label || !std::binary_search(classes.begin(), classes.end(), *r.label)) continue;
    truth.push_back(*r.label);
    pred.push_back(clf.predict(r.features));
  }
  if (truth.empty()) throw DataError("no test samples of the classifier's classes");
  return multiclass_metrics(confusion(truth, pred, classes));
}

namespace {

ClassifierModel fit_on(const LabeledSet& l, const RecordStore& store, const ClassifierOptions& base,
                       std::uint64_t seed) {
  std::vector<std::uint64_t> ids;
  std::vector<ClassLabel> y;
  for (const auto& e : l.entries()) {
    ids.push_back(e.id);
    y.push_back(e.label);
  }
  ClassifierOptions opts = base;
  opts.seed = seed;
  return train_classifier(store.features(ids), y, opts);
}

}  // namespace

IncrementalRun run_multi_step(const Dataset& train, const Dataset& test,
                              const std::vector<ClassLabel>& class_order,
                              const Schedule& schedule, const UpdateConfig& cfg,
                              Oracle* oracle) {
  validate_schedule(schedule);
  cfg.validate();
  {
    std::set<ClassLabel> distinct(class_order.begin(), class_order.end());
    if (class_order.size() != static_cast<std::size_t>(kNumAttackClasses) ||
        distinct.size() != class_order.size() ||
        std::any_of(class_order.begin(), class_order.end(),
                    [](ClassLabel c) { return !is_attack(c); })) {
      throw InvalidArgument("class_order must list the fourteen attack classes once each");
    }
  }
  const RecordStore store(train);
  std::set<std::uint64_t> test_ids;
  for (const auto& r : test.records) test_ids.insert(r.id);
  for (const auto& r : train.records) {
    if (test_ids.count(r.id) != 0) {
      throw DataError("record " + std::to_string(r.id) + " is in both train and test");
    }
    if (!r.label || !is_attack(*r.label)) {
      throw DataError("incremental training data must hold labeled attack records only");
    }
  }
  std::map<ClassLabel, std::vector<std::uint64_t>> by_class;
  for (const auto& r : train.records) by_class[*r.label].push_back(r.id);

  GroundTruthOracle truth(train);
  Oracle& ask = oracle != nullptr ? *oracle : truth;

  auto assert_no_leak = [&](const LabeledSet& l, const UnknownPool& u) {
    for (std::uint64_t id : u.ids()) {
      if (test_ids.count(id) != 0) throw std::logic_error("test id leaked into the pool");
    }
    for (const auto& e : l.entries()) {
      if (test_ids.count(e.id) != 0) throw std::logic_error("test id leaked into the labeled set");
    }
  };

  LabeledSet labeled;
  UnknownPool pool;
  std::size_t set_aside = 0;
  std::size_t introduced = 0;
  const int n0 = schedule.front().first;
  for (int i = 0; i < n0; ++i) {
    for (std::uint64_t id : by_class[class_order[i]]) {
      labeled.add({id, class_order[i], Provenance::kKnownPool, std::nullopt, 0});
      ++introduced;
    }
  }

  IncrementalRun run;
  const bool al = cfg.strategy == UpdateStrategy::kActiveLearning;
  for (std::size_t s = 0; s + 1 < schedule.size(); ++s) {
    const auto step_start = std::chrono::steady_clock::now();
    const std::uint64_t step_seed = derive_seed(cfg.seed, s);
    StepOutcome out;
    out.step = static_cast<int>(s) + 1;
    out.label = step_label(schedule[s].first, schedule[s].second);
    for (int i = schedule[s].first; i < schedule[s + 1].first; ++i) {
      out.new_classes.push_back(class_order[i]);
    }

    if (s > 0 && cfg.training_logic == TrainingLogic::kSeedBased) {
      set_aside += labeled
                       .extract_if([](const LabeledEntry& e) {
                         return e.provenance == Provenance::kPseudoLabel;
                       })
                       .size();
    }
    for (ClassLabel c : out.new_classes) {
      pool.insert(by_class[c]);
      introduced += by_class[c].size();
    }
    out.seeds = init_seed_set(pool, ask, out.new_classes, cfg.seeds_per_class,
                              derive_seed(step_seed, 1), out.step);
    for (const auto& e : out.seeds.samples) labeled.add(e);
    std::vector<ClassLabel> unreachable;
    {
      std::set<ClassLabel> seeded;
      for (const auto& e : out.seeds.samples) seeded.insert(e.label);
      for (ClassLabel c : out.new_classes) {
        if (seeded.count(c) == 0) unreachable.push_back(c);
      }
    }
    out.base_training_ids = labeled.ids();
    const std::size_t pool_start = pool.size();
    std::size_t used = 0;

    auto report = [&](int round, const ClassifierModel& clf, std::size_t accepted,
                      std::size_t queried, std::size_t abstained) {
      assert_no_leak(labeled, pool);
      IterationReport r;
      r.step = out.step;
      r.step_label = out.label;
      r.round = round;
      r.labeled = labeled.by_provenance();
      r.labeled_total = labeled.size();
      r.pool_start = pool_start;
      r.pool_remaining = pool.size();
      r.accepted = accepted;
      r.queried = queried;
      r.abstained = abstained;
      r.oracle_queries_used = used;
      r.set_aside = set_aside;
      r.introduced = introduced;
      r.classes = clf.classes();
      r.unreachable = unreachable;
      r.metrics = evaluate_classifier(clf, test);
      r.wall_clock_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - step_start).count();
      out.rounds.push_back(std::move(r));
    };

    auto classifier_seed = [&](int round) {
      return derive_seed(step_seed, 1000 + static_cast<std::uint64_t>(round));
    };
    ClassifierModel clf = fit_on(labeled, store, cfg.classifier, classifier_seed(0));
    report(0, clf, 0, 0, 0);

    for (int round = 1; round <= cfg.max_rounds && !pool.empty(); ++round) {
      std::size_t accepted = 0, queried = 0, abstained = 0;
      if (cfg.strategy == UpdateStrategy::kSelfTraining) {
        for (const auto& p : self_training_round(clf, store, pool, cfg.confidence_threshold)) {
          labeled.add({p.id, p.label, Provenance::kPseudoLabel, p.confidence, out.step});
          ++accepted;
        }
      } else if (al) {
        const std::size_t batch = std::min(cfg.al_batch_size, cfg.al_budget - used);
        const QueryBatch q = al_select(clf, store, pool, cfg.al_strategy, batch);
        const IngestResult got = al_ingest(q, ask, out.step);
        std::vector<std::uint64_t> ids;
        for (const auto& e : got.labeled) {
          labeled.add(e);
          ids.push_back(e.id);
        }
        pool.remove(ids);
        used += q.ids.size();
        queried = q.ids.size();
        accepted = got.labeled.size();
        abstained = got.abstained.size();
      } else {
        const GraphVariant variant = cfg.strategy == UpdateStrategy::kLabelPropagation
                                         ? GraphVariant::kPropagation
                                         : GraphVariant::kSpreading;
        std::vector<std::uint64_t> ids;
        for (const auto& g : graph_label_inference(
                 store, labeled, pool, cfg.graph, variant,
                 derive_seed(step_seed, 2000 + static_cast<std::uint64_t>(round)))) {
          if (g.confidence >= cfg.confidence_threshold) {
            labeled.add({g.id, g.label, Provenance::kPseudoLabel, g.confidence, out.step});
            ids.push_back(g.id);
          }
        }
        pool.remove(ids);
        accepted = ids.size();
      }
      clf = fit_on(labeled, store, cfg.classifier, classifier_seed(round));
      report(round, clf, accepted, queried, abstained);
      const std::span<const IterationReport> updates(out.rounds.data() + 1, out.rounds.size() - 1);
      if (check_convergence(updates, cfg.convergence, al && used >= cfg.al_budget)) break;
    }
    out.final_training_ids = labeled.ids();
    run.steps.push_back(std::move(out));
  }
  return run;
}

IncrementalRun run_one_step(const Dataset& train, const Dataset& test,
                            const std::vector<ClassLabel>& known, const UpdateConfig& cfg,
                            Oracle* oracle) {
  std::vector<ClassLabel> order = known;
  std::sort(order.begin(), order.end());
  for (ClassLabel c : attack_classes()) {
    if (std::find(known.begin(), known.end(), c) == known.end()) order.push_back(c);
  }
  const int n = static_cast<int>(known.size());
  return run_multi_step(train, test, order, {{n, kNumAttackClasses - n}, {kNumAttackClasses, 0}},
                        cfg, oracle);
}

}  // namespace mi2das

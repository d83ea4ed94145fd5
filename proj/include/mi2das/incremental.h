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

#ifndef MI2DAS_INCREMENTAL_H_
#define MI2DAS_INCREMENTAL_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mi2das/classifiers.h"
#include "mi2das/dataset.h"
#include "mi2das/metrics.h"

namespace mi2das {

// Immutable flow records addressed by id.
class RecordStore {
 public:
  RecordStore() = default;
  explicit RecordStore(const Dataset& ds);

  void add(FlowRecord record);  // throws InvalidArgument on a duplicate id
  bool contains(std::uint64_t id) const { return index_.count(id) != 0; }
  const FlowRecord& get(std::uint64_t id) const;
  std::size_t size() const { return records_.size(); }
  std::size_t dim() const;
  Matrix features(std::span<const std::uint64_t> ids) const;
  std::vector<std::uint64_t> ids() const;

 private:
  std::vector<FlowRecord> records_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

enum class Provenance { kKnownPool, kSeed, kPseudoLabel, kOracleQuery };

std::string_view to_string(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view text);

struct LabeledEntry {
  std::uint64_t id = 0;
  ClassLabel label = ClassLabel::kNormal;
  Provenance provenance = Provenance::kKnownPool;
  std::optional<double> confidence;  // pseudo-labels only
  int step = 0;                      // schedule step that added the entry
};

class LabeledSet {
 public:
  // Throws InvalidArgument on a duplicate id, an Unknown label, or a
  // pseudo-label without a confidence.
  void add(LabeledEntry entry);
  bool contains(std::uint64_t id) const { return index_.count(id) != 0; }
  const std::vector<LabeledEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::map<Provenance, std::size_t> by_provenance() const;
  std::vector<ClassLabel> classes() const;  // sorted, distinct
  std::vector<std::uint64_t> ids() const;   // sorted

  // Removes and returns every entry matching `pred`.
  template <typename Pred>
  std::vector<LabeledEntry> extract_if(Pred&& pred) {
    std::vector<LabeledEntry> kept, out;
    for (auto& e : entries_) (pred(e) ? out : kept).push_back(std::move(e));
    entries_ = std::move(kept);
    reindex();
    return out;
  }

 private:
  void reindex();
  std::vector<LabeledEntry> entries_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

// Sorted ids of flows awaiting a label.
class UnknownPool {
 public:
  UnknownPool() = default;
  explicit UnknownPool(std::vector<std::uint64_t> ids);

  const std::vector<std::uint64_t>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  bool contains(std::uint64_t id) const;
  void insert(std::span<const std::uint64_t> ids);
  // Removes the given ids; returns how many were present.
  std::size_t remove(std::span<const std::uint64_t> ids);

 private:
  std::vector<std::uint64_t> ids_;
};

// Label source: hidden dataset labels in experiments, an analyst in the
// service. An empty result is an abstention.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::optional<ClassLabel> label(std::uint64_t id) = 0;
};

class GroundTruthOracle : public Oracle {
 public:
  explicit GroundTruthOracle(const Dataset& ds);
  std::optional<ClassLabel> label(std::uint64_t id) override;
  // Ids for which the oracle abstains.
  void abstain_on(std::vector<std::uint64_t> ids);
  std::size_t calls() const { return calls_; }

 private:
  std::unordered_map<std::uint64_t, ClassLabel> labels_;
  std::vector<std::uint64_t> abstain_;
  std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------

struct SeedSet {
  std::vector<LabeledEntry> samples;
  int per_class_count = 0;
  // Classes that yielded fewer than per_class_count samples, with the
  // number actually taken.
  std::map<ClassLabel, std::size_t> shortfall;
};

// Per new class, a uniform sample of per_class_count pool ids among those
// the oracle assigns to that class; taken samples leave the pool. Class c is
// sampled from Rng(derive_seed(seed, label_index(c))).
SeedSet init_seed_set(UnknownPool& pool, Oracle& oracle,
                      const std::vector<ClassLabel>& new_classes, int per_class_count,
                      std::uint64_t seed, int step = 0);

struct PseudoLabel {
  std::uint64_t id = 0;
  ClassLabel label = ClassLabel::kNormal;
  double confidence = 0.0;
};

// Every pool sample whose max probability reaches `threshold`, labeled by
// argmax; accepted ids leave the pool.
std::vector<PseudoLabel> self_training_round(const ClassifierModel& clf,
                                             const RecordStore& store, UnknownPool& pool,
                                             double threshold);

enum class GraphVariant { kPropagation, kSpreading };

struct GraphConfig {
  int n_neighbors = 7;
  std::optional<double> rbf_gamma;  // unset: 1 / dim
  double alpha = 0.2;               // spreading only
  std::size_t max_nodes = 5000;
  double tol = 1e-6;
  int max_iter = 1000;
};

// Symmetrized kNN affinity graph, W_ij = exp(-gamma |x_i - x_j|^2) when
// either endpoint is among the other's n_neighbors nearest.
struct LabelGraph {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> degree;
};

LabelGraph build_label_graph(const Matrix& x, int n_neighbors, double gamma);

struct Diffusion {
  // n x k row-major label scores.
  std::vector<double> f;
  int iterations = 0;
  double last_change = 0.0;
  bool converged = false;
};

// One diffusion iteration. Propagation: F <- D^-1 W F with labeled rows
// clamped to y0. Spreading: F <- alpha S F + (1 - alpha) Y0 with
// S = D^-1/2 W D^-1/2.
std::vector<double> diffusion_step(const LabelGraph& g, std::span<const double> f,
                                   std::span<const double> y0, std::span<const char> labeled,
                                   std::size_t k, GraphVariant variant, double alpha);

Diffusion diffuse(const LabelGraph& g, std::span<const double> y0, std::span<const char> labeled,
                  std::size_t k, GraphVariant variant, double alpha, double tol, int max_iter);

struct GraphInference {
  std::uint64_t id = 0;
  ClassLabel label = ClassLabel::kNormal;
  double confidence = 0.0;
  std::vector<double> distribution;  // over the labeled set's classes
};

// Infers labels for the pool samples included in the (capped) graph.
std::vector<GraphInference> graph_label_inference(const RecordStore& store,
                                                  const LabeledSet& labeled,
                                                  const UnknownPool& pool,
                                                  const GraphConfig& cfg, GraphVariant variant,
                                                  std::uint64_t seed);

enum class AlStrategy { kLeastConfidence, kMargin, kEntropy };

std::string_view to_string(AlStrategy s);
std::optional<AlStrategy> parse_al_strategy(std::string_view text);
double uncertainty(std::span<const double> p, AlStrategy strategy);

struct QueryBatch {
  std::vector<std::uint64_t> ids;
  std::vector<double> uncertainties;  // descending
  AlStrategy strategy = AlStrategy::kEntropy;
  bool truncated = false;  // batch exceeded the pool size
};

QueryBatch al_select(const ClassifierModel& clf, const RecordStore& store,
                     const UnknownPool& pool, AlStrategy strategy, std::size_t batch);

struct IngestResult {
  std::vector<LabeledEntry> labeled;     // provenance oracle_query
  std::vector<std::uint64_t> abstained;  // stay in the pool
};

// Queries the oracle; the caller moves `labeled` into L and out of U.
IngestResult al_ingest(const QueryBatch& q, Oracle& oracle, int step = 0);

// ---------------------------------------------------------------------------

enum class UpdateStrategy { kSelfTraining, kLabelPropagation, kLabelSpreading, kActiveLearning };
enum class TrainingLogic { kSeedBased, kAugmentation };

std::string_view to_string(UpdateStrategy s);
std::optional<UpdateStrategy> parse_update_strategy(std::string_view text);
std::string_view to_string(TrainingLogic l);
std::optional<TrainingLogic> parse_training_logic(std::string_view text);

struct ConvergenceConfig {
  double min_pool_drain_fraction = 0.01;
  int patience = 3;
};

struct UpdateConfig {
  UpdateStrategy strategy = UpdateStrategy::kSelfTraining;
  TrainingLogic training_logic = TrainingLogic::kAugmentation;
  double confidence_threshold = 0.9;
  int seeds_per_class = 20;
  std::size_t al_batch_size = 50;
  std::size_t al_budget = 500;  // oracle queries per schedule step
  AlStrategy al_strategy = AlStrategy::kEntropy;
  int max_rounds = 20;
  ConvergenceConfig convergence;
  GraphConfig graph;
  ClassifierOptions classifier;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const UpdateConfig& cfg);
UpdateConfig update_config_from_json(const nlohmann::json& j);

struct IterationReport {
  int step = 0;
  std::string step_label;  // e.g. "4K+10U"
  int round = 0;           // 0: after seeding, before any update
  std::map<Provenance, std::size_t> labeled;
  std::size_t labeled_total = 0;
  std::size_t pool_start = 0;  // pool size after seeding
  std::size_t pool_remaining = 0;
  std::size_t accepted = 0;  // pseudo-labels or oracle labels this round
  std::size_t queried = 0;
  std::size_t abstained = 0;
  std::size_t oracle_queries_used = 0;  // within the step
  std::size_t set_aside = 0;            // prior pseudo-labels dropped by seed-based logic
  std::size_t introduced = 0;           // train records of classes introduced so far
  std::vector<ClassLabel> classes;      // classifier classes
  std::vector<ClassLabel> unreachable;  // new classes with no seed
  MetricBlock metrics;
  double wall_clock_seconds = 0.0;
};

// Without wall-clock when `include_timing` is false (canonical form).
nlohmann::json to_json(const IterationReport& r, bool include_timing = true);

bool check_convergence(std::span<const IterationReport> history, const ConvergenceConfig& cfg,
                       bool al_budget_exhausted = false);

// Steps as (n_known, n_unknown) states; the last must be (14, 0).
using Schedule = std::vector<std::pair<int, int>>;

void validate_schedule(const Schedule& schedule);
std::string step_label(int n_known, int n_unknown);

struct StepOutcome {
  int step = 0;
  std::string label;
  std::vector<ClassLabel> new_classes;
  SeedSet seeds;
  // Training set after seeding and the set-aside rule, before any update.
  std::vector<std::uint64_t> base_training_ids;
  std::vector<std::uint64_t> final_training_ids;
  std::vector<IterationReport> rounds;
};

struct IncrementalRun {
  std::vector<StepOutcome> steps;
  // Final report of every step.
  std::vector<IterationReport> reports() const;
};

// `class_order` lists the fourteen attack classes: the first schedule[0]
// are known from the start, the rest are introduced in order. `train` and
// `test` hold attack records only; train labels are visible only through
// the known pool and `oracle` (ground truth from `train` when null).
IncrementalRun run_multi_step(const Dataset& train, const Dataset& test,
                              const std::vector<ClassLabel>& class_order,
                              const Schedule& schedule, const UpdateConfig& cfg,
                              Oracle* oracle = nullptr);

// Schedule {(N, 14 - N), (14, 0)}; the remaining classes follow `known` in
// taxonomy order.
IncrementalRun run_one_step(const Dataset& train, const Dataset& test,
                            const std::vector<ClassLabel>& known, const UpdateConfig& cfg,
                            Oracle* oracle = nullptr);

// Multiclass metrics of `clf` on the test records whose class it knows.
MetricBlock evaluate_classifier(const ClassifierModel& clf, const Dataset& test);

}  // namespace mi2das

#endif  // MI2DAS_INCREMENTAL_H_

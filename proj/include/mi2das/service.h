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

#ifndef MI2DAS_SERVICE_H_
#define MI2DAS_SERVICE_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mi2das/classifiers.h"
#include "mi2das/dataset.h"
#include "mi2das/detectors.h"
#include "mi2das/incremental.h"
#include "mi2das/pooling.h"

namespace httplib {
class Server;
}

namespace mi2das {

// Request errors carry the HTTP status they map to.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  // Events, audit log and model snapshots; empty keeps state in memory.
  std::filesystem::path state_dir;
  std::size_t pool_capacity = 100'000;  // per pool, FIFO eviction
  std::string cors_origin = "*";
  std::size_t max_query_limit = 1000;
  AlStrategy al_strategy = AlStrategy::kEntropy;
  ClassifierOptions classifier = [] {
    ClassifierOptions o;
    std::get<ForestHyper>(o.hyper).n_trees = 100;
    return o;
  }();
  std::uint64_t seed = 0;
  // Called during retraining after the models are fitted and before they
  // are published; a throw aborts the retrain. Test hook.
  std::function<void()> retrain_hook;
};

// Models a request observes together; never mutated once published.
struct ModelSnapshot {
  std::uint64_t version = 0;
  DetectorModel layer1;
  DetectorModel layer2;
  ClassifierModel classifier;
};

// Initial models and data for a fresh state directory.
struct BootstrapData {
  Dataset train;    // labeled; Normal plus attack records
  Dataset holdout;  // labeled evaluation set for iteration reports; may be empty
  Dataset stream;   // unlabeled flows routed at startup
  PartitionSpec known{{ClassLabel::kBackdoor}};
  Layer1TrainConfig layer1;
  DetectorHyper layer2 = LofHyper{.k = 10};
  double layer2_th_per = 5.0;
};

// Desk-scale bootstrap: synthetic desk profile split in half, seven known
// attack classes, Layer-1 GMM (nc=3, th_per=5), Layer-2 LOF, and the
// unknown-class training flows as the startup stream.
BootstrapData desk_bootstrap(std::uint64_t seed = 7);

// Live pipeline state: models, pools, AL queue, labeled set and history.
// Thread-safe; retraining is serialized, reads use published snapshots.
class Pipeline {
 public:
  // Restores state from cfg.state_dir when it holds a model snapshot, else
  // bootstraps from `bootstrap` (required in that case).
  Pipeline(ServiceConfig cfg, std::optional<BootstrapData> bootstrap);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  std::shared_ptr<const ModelSnapshot> snapshot() const;

  nlohmann::json status() const;
  // {"features": [...]} or {"flows": [{"features": [...]}, ...]}.
  nlohmann::json classify(const nlohmann::json& body);
  nlohmann::json pools(bool include_ids, std::optional<std::uint64_t> member) const;
  nlohmann::json al_queries(std::size_t limit);
  // {"analyst": "...", "labels": {"<id>": "<label>" | null}} or
  // {"labels": [{"id": n, "label": "..."} | {"id": n, "abstain": true}]}.
  nlohmann::json submit_labels(const nlohmann::json& body);
  nlohmann::json retrain(const nlohmann::json& overrides);
  nlohmann::json metrics_history() const;
  std::optional<nlohmann::json> model(std::uint64_t version) const;

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct BoundedPool {
    std::deque<std::uint64_t> order;
    std::set<std::uint64_t> members;
    std::size_t evicted = 0;
  };

  void bootstrap(const BootstrapData& data);
  void restore();
  void append_event(const nlohmann::json& event);
  void apply_event(const nlohmann::json& event);
  void add_to_pool(Pool pool, std::uint64_t id, std::vector<double> features);
  void return_queue_to_pool();
  nlohmann::json route_one(const ModelSnapshot& snap, const nlohmann::json& flow);
  IterationReport make_report(const ModelSnapshot& snap, std::size_t accepted) const;
  void write_snapshot(const ModelSnapshot& snap) const;

  ServiceConfig cfg_;

  mutable std::mutex snap_mu_;
  std::shared_ptr<const ModelSnapshot> current_;
  std::map<std::uint64_t, std::shared_ptr<const ModelSnapshot>> published_;

  std::mutex retrain_mu_;
  mutable std::mutex mu_;
  std::map<Pool, BoundedPool> pools_;
  std::unordered_map<std::uint64_t, std::vector<double>> features_;  // unknown pool + queue
  std::unordered_map<std::uint64_t, ClassLabel> known_predictions_;
  std::vector<std::uint64_t> queue_;
  std::optional<nlohmann::json> queue_key_;
  nlohmann::json queue_cache_;
  LabeledSet labeled_;
  std::unordered_map<std::uint64_t, std::vector<double>> labeled_features_;
  std::set<std::uint64_t> answered_;
  std::uint64_t next_id_ = 0;
  std::uint64_t pool_version_ = 0;
  std::size_t new_labels_ = 0;
  std::size_t queried_since_ = 0;
  std::size_t abstained_since_ = 0;
  std::size_t oracle_total_ = 0;
  std::vector<nlohmann::json> history_;
  Dataset holdout_;
  bool replaying_ = false;
};

// HTTP front end over a Pipeline.
class HttpService {
 public:
  explicit HttpService(Pipeline& pipeline);
  ~HttpService();

  // Binds the configured address; returns the bound port.
  int bind();
  // Serves until stop(); bind() must have succeeded.
  void listen();
  // bind() plus listen() on a background thread.
  int start();
  void stop();

 private:
  Pipeline& pipeline_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace mi2das

#endif  // MI2DAS_SERVICE_H_

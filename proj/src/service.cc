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

#include "mi2das/service.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "mi2das/errors.h"
#include "mi2das/experiments.h"
#include "mi2das/rng.h"

namespace mi2das {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms.count()));
  return out;
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void append_line(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append to " + path.string());
  out << j.dump() << '\n';
  out.flush();
}

json snapshot_to_json(const ModelSnapshot& s) {
  return {{"format", "mi2das.snapshot"},
          {"version", s.version},
          {"layer1", to_json(s.layer1)},
          {"layer2", to_json(s.layer2)},
          {"classifier", to_json(s.classifier)}};
}

ModelSnapshot snapshot_from_json(const json& j) {
  if (j.value("format", std::string()) != "mi2das.snapshot") {
    throw DataError("not a model snapshot");
  }
  return {j.at("version").get<std::uint64_t>(), detector_from_json(j.at("layer1")),
          detector_from_json(j.at("layer2")), classifier_from_json(j.at("classifier"))};
}

std::vector<double> parse_features(const json& flow, std::size_t dim) {
  if (!flow.is_object() || !flow.contains("features") || !flow.at("features").is_array()) {
    throw ServiceError(400, "flow needs a 'features' array");
  }
  const json& f = flow.at("features");
  if (f.size() != dim) {
    throw ServiceError(400, "expected " + std::to_string(dim) + " features, got " +
                                std::to_string(f.size()));
  }
  std::vector<double> out;
  out.reserve(dim);
  for (const auto& v : f) {
    if (!v.is_number()) throw ServiceError(400, "features must be numbers");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ServiceError(400, "features must be finite");
    out.push_back(x);
  }
  return out;
}

json distribution_json(const ClassifierModel& clf, std::span<const double> p) {
  json d = json::object();
  for (std::size_t i = 0; i < p.size(); ++i) d[std::string(to_string(clf.classes()[i]))] = p[i];
  return d;
}

json top_classes(const ClassifierModel& clf, std::span<const double> p, std::size_t k) {
  std::vector<std::size_t> order(p.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  json out = json::array();
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    out.push_back({{"class", std::string(to_string(clf.classes()[order[i]]))}, {"p", p[order[i]]}});
  }
  return out;
}

std::optional<Pool> parse_pool(std::string_view s) {
  for (Pool p : {Pool::kNormal, Pool::kKnownAttack, Pool::kUnknown}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

}  // namespace

BootstrapData desk_bootstrap(std::uint64_t seed) {
  const Dataset full = generate_synthetic(desk_profile(seed));
  TrainTest tt = make_split(full, {SplitMode::kRandomStratified, 0.5, seed});
  BootstrapData b;
  b.known = enumerate_partitions(7, 1, derive_seed(seed, 7)).front();
  b.train = tt.train.filter([&](const FlowRecord& r) {
    return *r.label == ClassLabel::kNormal || b.known.is_known(*r.label);
  });
  b.stream = tt.train.filter([&](const FlowRecord& r) {
    return *r.label != ClassLabel::kNormal && !b.known.is_known(*r.label);
  });
  for (auto& r : b.stream.records) r.label.reset();
  b.holdout = tt.test.filter([](const FlowRecord& r) { return *r.label != ClassLabel::kNormal; });
  b.layer1.mode = Layer1Mode::kNovelty;
  GmmHyper gmm;
  gmm.nc = 3;
  b.layer1.detector = gmm;
  b.layer1.th_per = 5.0;
  b.layer1.seed = seed;
  b.layer2 = LofHyper{.k = 10};
  b.layer2_th_per = 5.0;
  return b;
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(ServiceConfig cfg, std::optional<BootstrapData> bootstrap_data)
    : cfg_(std::move(cfg)) {
  for (Pool p : {Pool::kNormal, Pool::kKnownAttack, Pool::kUnknown}) pools_[p];
  if (cfg_.pool_capacity == 0) throw InvalidArgument("pool capacity must be positive");
  bool restored = false;
  if (!cfg_.state_dir.empty()) {
    fs::create_directories(cfg_.state_dir / "snapshots");
    for (const auto& entry : fs::directory_iterator(cfg_.state_dir / "snapshots")) {
      if (entry.path().extension() == ".json") {
        restored = true;
        break;
      }
    }
  }
  if (restored) {
    restore();
  } else {
    if (!bootstrap_data) throw InvalidArgument("empty state directory and no bootstrap data");
    bootstrap(*bootstrap_data);
  }
}

Pipeline::~Pipeline() = default;

std::shared_ptr<const ModelSnapshot> Pipeline::snapshot() const {
  std::lock_guard lock(snap_mu_);
  return current_;
}

void Pipeline::append_event(const json& event) {
  if (replaying_ || cfg_.state_dir.empty()) return;
  append_line(cfg_.state_dir / "events.jsonl", event);
}

void Pipeline::write_snapshot(const ModelSnapshot& snap) const {
  if (cfg_.state_dir.empty()) return;
  write_atomic(cfg_.state_dir / "snapshots" / ("model-" + std::to_string(snap.version) + ".json"),
               snapshot_to_json(snap).dump() + "\n");
}

void Pipeline::add_to_pool(Pool pool, std::uint64_t id, std::vector<double> features) {
  BoundedPool& bp = pools_[pool];
  bp.order.push_back(id);
  bp.members.insert(id);
  if (pool == Pool::kUnknown) features_[id] = std::move(features);
  while (bp.order.size() > cfg_.pool_capacity) {
    const std::uint64_t old = bp.order.front();
    bp.order.pop_front();
    bp.members.erase(old);
    ++bp.evicted;
    if (pool == Pool::kUnknown) features_.erase(old);
    if (pool == Pool::kKnownAttack) known_predictions_.erase(old);
    append_event({{"e", "evict"}, {"id", old}, {"pool", std::string(to_string(pool))}});
  }
  ++pool_version_;
}

void Pipeline::return_queue_to_pool() {
  BoundedPool& bp = pools_[Pool::kUnknown];
  for (std::uint64_t id : queue_) {
    bp.members.insert(id);
    bp.order.push_back(id);
  }
  queue_.clear();
  queue_key_.reset();
}

void Pipeline::apply_event(const json& e) {
  const std::string type = e.at("e").get<std::string>();
  if (type == "labeled") {
    const std::uint64_t id = e.at("id").get<std::uint64_t>();
    const auto label = parse_ground_truth(e.at("label").get<std::string>());
    if (!label) throw DataError("event with bad label");
    const auto prov = parse_provenance(e.at("provenance").get<std::string>());
    labeled_.add({id, *label, prov.value_or(Provenance::kOracleQuery), std::nullopt, 0});
    labeled_features_[id] = e.at("features").get<std::vector<double>>();
    next_id_ = std::max(next_id_, id + 1);
  } else if (type == "pool") {
    const std::uint64_t id = e.at("id").get<std::uint64_t>();
    const auto pool = parse_pool(e.at("pool").get<std::string>());
    if (!pool) throw DataError("event with bad pool");
    if (*pool == Pool::kKnownAttack && e.contains("predicted")) {
      known_predictions_[id] = *parse_ground_truth(e.at("predicted").get<std::string>());
    }
    std::vector<double> f;
    if (e.contains("features")) f = e.at("features").get<std::vector<double>>();
    add_to_pool(*pool, id, std::move(f));
    next_id_ = std::max(next_id_, id + 1);
  } else if (type == "queue") {
    const std::set<std::uint64_t> before(queue_.begin(), queue_.end());
    return_queue_to_pool();
    BoundedPool& bp = pools_[Pool::kUnknown];
    for (const auto& v : e.at("ids")) {
      const std::uint64_t id = v.get<std::uint64_t>();
      bp.members.erase(id);
      queue_.push_back(id);
      // Re-issuing a pending query is not a new one.
      if (!before.count(id)) ++queried_since_;
    }
    std::erase_if(bp.order, [&](std::uint64_t id) { return !bp.members.count(id); });
  } else if (type == "answer") {
    const std::uint64_t id = e.at("id").get<std::uint64_t>();
    std::erase(queue_, id);
    queue_key_.reset();
    ++pool_version_;
    if (e.at("label").is_null()) {
      pools_[Pool::kUnknown].members.insert(id);
      pools_[Pool::kUnknown].order.push_back(id);
      ++abstained_since_;
      return;
    }
    const ClassLabel label = *parse_ground_truth(e.at("label").get<std::string>());
    answered_.insert(id);
    ++oracle_total_;
    auto f = std::move(features_[id]);
    features_.erase(id);
    if (label == ClassLabel::kNormal) {
      add_to_pool(Pool::kNormal, id, {});
      return;
    }
    labeled_.add({id, label, Provenance::kOracleQuery, std::nullopt, 0});
    labeled_features_[id] = std::move(f);
    ++new_labels_;
  } else if (type == "publish") {
    history_.push_back(e.at("report"));
    new_labels_ = 0;
    queried_since_ = 0;
    abstained_since_ = 0;
    queue_key_.reset();
  }
  // "evict" events are an audit trail; eviction is recomputed on replay.
}

void Pipeline::bootstrap(const BootstrapData& data) {
  if (data.train.empty()) throw InvalidArgument("bootstrap needs training records");
  const DetectorModel l1 = train_layer1(data.train, data.layer1);
  const Dataset attacks =
      data.train.filter([](const FlowRecord& r) { return r.label && is_attack(*r.label); });
  const DetectorModel l2 = train_layer2(attacks, data.known, data.layer2, data.layer2_th_per);
  const Dataset known =
      attacks.filter([&](const FlowRecord& r) { return data.known.is_known(*r.label); });
  ClassifierOptions opts = cfg_.classifier;
  opts.seed = derive_seed(cfg_.seed, 1);
  ClassifierModel clf = train_classifier(known, opts);
  holdout_ = data.holdout;
  if (!cfg_.state_dir.empty()) {
    fs::remove(cfg_.state_dir / "events.jsonl");
    if (!holdout_.empty()) write_jsonl(holdout_, cfg_.state_dir / "holdout.jsonl");
  }

  auto snap = std::make_shared<const ModelSnapshot>(ModelSnapshot{1, l1, l2, std::move(clf)});
  {
    std::lock_guard lock(mu_);
    for (const auto& r : known.records) {
      const json e = {{"e", "labeled"},
                      {"id", r.id},
                      {"label", std::string(to_string(*r.label))},
                      {"provenance", std::string(to_string(Provenance::kKnownPool))},
                      {"features", r.features}};
      apply_event(e);
      append_event(e);
    }
    for (const auto& r : data.train.records) next_id_ = std::max(next_id_, r.id + 1);
    for (const auto& r : data.stream.records) next_id_ = std::max(next_id_, r.id + 1);
    for (const auto& r : data.holdout.records) next_id_ = std::max(next_id_, r.id + 1);
    write_snapshot(*snap);
    const IterationReport report = make_report(*snap, 0);
    const json e = {{"e", "publish"}, {"version", 1}, {"report", to_json(report)}};
    apply_event(e);
    append_event(e);
  }
  {
    std::lock_guard slock(snap_mu_);
    current_ = snap;
    published_[1] = snap;
  }
  for (const auto& r : data.stream.records) {
    route_one(*snap, {{"id", r.id}, {"features", r.features}});
  }
}

void Pipeline::restore() {
  std::vector<std::shared_ptr<const ModelSnapshot>> snaps;
  for (const auto& entry : fs::directory_iterator(cfg_.state_dir / "snapshots")) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    snaps.push_back(std::make_shared<const ModelSnapshot>(snapshot_from_json(json::parse(in))));
  }
  std::sort(snaps.begin(), snaps.end(),
            [](const auto& a, const auto& b) { return a->version < b->version; });
  {
    std::lock_guard slock(snap_mu_);
    for (const auto& s : snaps) published_[s->version] = s;
    current_ = snaps.back();
  }
  if (fs::exists(cfg_.state_dir / "holdout.jsonl")) {
    holdout_ = read_jsonl(cfg_.state_dir / "holdout.jsonl");
  }
  std::lock_guard lock(mu_);
  replaying_ = true;
  std::ifstream in(cfg_.state_dir / "events.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json e;
    try {
      e = json::parse(line);
    } catch (const json::exception&) {
      break;  // torn final line from an interrupted write
    }
    apply_event(e);
  }
  replaying_ = false;
}

json Pipeline::route_one(const ModelSnapshot& snap, const json& flow) {
  std::vector<double> x = parse_features(flow, snap.layer1.dim());
  const PoolAssignment a = route(x, snap.layer1, snap.layer2);
  json out = {{"pool", std::string(to_string(a.pool))},
              {"layer1_score", a.layer1_score},
              {"layer2_score", a.layer2_score ? json(*a.layer2_score) : json(nullptr)},
              {"model_version", snap.version}};
  std::optional<ClassLabel> predicted;
  if (a.pool == Pool::kKnownAttack) {
    const std::vector<double> p = snap.classifier.predict_proba(x);
    predicted = snap.classifier.classes()[argmax(p)];
    out["predicted"] = std::string(to_string(*predicted));
    out["probabilities"] = distribution_json(snap.classifier, p);
  }
  std::lock_guard lock(mu_);
  std::uint64_t id = next_id_;
  if (flow.contains("id") && !flow.at("id").is_null()) {
    id = flow.at("id").get<std::uint64_t>();
    bool seen = labeled_.contains(id) || answered_.count(id) ||
                std::find(queue_.begin(), queue_.end(), id) != queue_.end();
    for (const auto& [p, bp] : pools_) seen = seen || bp.members.count(id);
    if (seen) throw ServiceError(400, "duplicate flow id " + std::to_string(id));
  }
  next_id_ = std::max(next_id_, id + 1);
  json e = {{"e", "pool"}, {"id", id}, {"pool", std::string(to_string(a.pool))}};
  if (a.pool == Pool::kUnknown) e["features"] = x;
  if (predicted) {
    e["predicted"] = std::string(to_string(*predicted));
    known_predictions_[id] = *predicted;
  }
  append_event(e);
  add_to_pool(a.pool, id, std::move(x));
  out["id"] = id;
  return out;
}

json Pipeline::classify(const json& body) {
  const auto snap = snapshot();
  if (!body.is_object()) throw ServiceError(400, "body must be a JSON object");
  if (body.contains("flows")) {
    if (!body.at("flows").is_array()) throw ServiceError(400, "'flows' must be an array");
    // Validate the whole batch before any pool append.
    for (const auto& f : body.at("flows")) parse_features(f, snap->layer1.dim());
    json results = json::array();
    for (const auto& f : body.at("flows")) results.push_back(route_one(*snap, f));
    return {{"model_version", snap->version}, {"results", std::move(results)}};
  }
  return route_one(*snap, body);
}

json Pipeline::status() const {
  const auto snap = snapshot();
  std::lock_guard lock(mu_);
  return {{"service", "mi2das"},
          {"code_version", std::string(kCodeVersion)},
          {"model_version", snap->version},
          {"layer1",
           {{"kind", std::string(to_string(snap->layer1.kind()))},
            {"threshold", *snap->layer1.threshold()}}},
          {"layer2",
           {{"kind", std::string(to_string(snap->layer2.kind()))},
            {"threshold", *snap->layer2.threshold()}}},
          {"classifier",
           {{"kind", std::string(to_string(snap->classifier.kind()))},
            {"classes", label_names(snap->classifier.classes())}}},
          {"pools",
           {{"normal", pools_.at(Pool::kNormal).members.size()},
            {"known_attack", pools_.at(Pool::kKnownAttack).members.size()},
            {"unknown", pools_.at(Pool::kUnknown).members.size()}}},
          {"queue", queue_.size()},
          {"labeled", labeled_.size()},
          {"new_labels", new_labels_},
          {"pool_version", pool_version_}};
}

json Pipeline::pools(bool include_ids, std::optional<std::uint64_t> member) const {
  std::lock_guard lock(mu_);
  json out = {{"pool_version", pool_version_}, {"capacity", cfg_.pool_capacity}};
  for (const auto& [pool, bp] : pools_) {
    json p = {{"size", bp.members.size()}, {"evicted", bp.evicted}};
    if (pool == Pool::kKnownAttack) {
      std::map<std::string, std::size_t> by_class;
      for (std::uint64_t id : bp.members) {
        const auto it = known_predictions_.find(id);
        if (it != known_predictions_.end()) ++by_class[std::string(to_string(it->second))];
      }
      p["by_class"] = by_class;
    }
    if (include_ids) p["ids"] = std::vector<std::uint64_t>(bp.members.begin(), bp.members.end());
    out[std::string(to_string(pool))] = std::move(p);
  }
  json queued = {{"size", queue_.size()}};
  json labeled = {{"size", labeled_.size()}};
  json prov = json::object();
  for (const auto& [p, n] : labeled_.by_provenance()) prov[std::string(to_string(p))] = n;
  labeled["by_provenance"] = std::move(prov);
  labeled["classes"] = label_names(labeled_.classes());
  if (include_ids) {
    std::vector<std::uint64_t> q = queue_;
    std::sort(q.begin(), q.end());
    queued["ids"] = q;
    labeled["ids"] = labeled_.ids();
  }
  out["queued"] = std::move(queued);
  out["labeled"] = std::move(labeled);
  if (member) {
    json where = nullptr;
    for (const auto& [pool, bp] : pools_) {
      if (bp.members.count(*member)) where = std::string(to_string(pool));
    }
    if (std::find(queue_.begin(), queue_.end(), *member) != queue_.end()) where = "queued";
    if (labeled_.contains(*member)) where = "labeled";
    out["member"] = {{"id", *member}, {"location", where}};
  }
  return out;
}

json Pipeline::al_queries(std::size_t limit) {
  if (limit == 0 || limit > cfg_.max_query_limit) {
    throw ServiceError(400, "limit must lie in [1, " + std::to_string(cfg_.max_query_limit) + "]");
  }
  const auto snap = snapshot();
  std::lock_guard lock(mu_);
  const json key = {{"pool_version", pool_version_}, {"model_version", snap->version}, {"limit", limit}};
  if (queue_key_ && *queue_key_ == key) return queue_cache_;

  std::vector<std::uint64_t> candidates(pools_[Pool::kUnknown].members.begin(),
                                        pools_[Pool::kUnknown].members.end());
  candidates.insert(candidates.end(), queue_.begin(), queue_.end());
  struct Scored {
    std::uint64_t id;
    double u;
    std::vector<double> p;
  };
  std::vector<Scored> scored;
  scored.reserve(candidates.size());
  for (std::uint64_t id : candidates) {
    std::vector<double> p = snap->classifier.predict_proba(features_.at(id));
    const double u = uncertainty(p, cfg_.al_strategy);
    scored.push_back({id, u, std::move(p)});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    return a.u != b.u ? a.u > b.u : a.id < b.id;
  });
  if (scored.size() > limit) scored.resize(limit);

  json ids = json::array();
  for (const auto& s : scored) ids.push_back(s.id);
  const json e = {{"e", "queue"}, {"ids", ids}};
  apply_event(e);
  append_event(e);

  json queries = json::array();
  for (const auto& s : scored) {
    queries.push_back({{"id", s.id},
                       {"uncertainty", s.u},
                       {"distribution", distribution_json(snap->classifier, s.p)},
                       {"top_classes", top_classes(snap->classifier, s.p, 3)},
                       {"features", features_.at(s.id)}});
  }
  queue_key_ = key;
  queue_cache_ = {{"batch_key", key},
                  {"model_version", snap->version},
                  {"pool_version", pool_version_},
                  {"strategy", std::string(to_string(cfg_.al_strategy))},
                  {"queries", std::move(queries)}};
  return queue_cache_;
}

json Pipeline::submit_labels(const json& body) {
  if (!body.is_object() || !body.contains("labels")) {
    throw ServiceError(400, "body needs 'labels'");
  }
  const std::string analyst = body.value("analyst", std::string("anonymous"));
  std::vector<std::pair<json, json>> items;  // (id, label-or-null)
  const json& labels = body.at("labels");
  if (labels.is_object()) {
    for (const auto& [k, v] : labels.items()) items.emplace_back(json(k), v);
  } else if (labels.is_array()) {
    for (const auto& entry : labels) {
      if (!entry.is_object() || !entry.contains("id")) {
        items.emplace_back(json(nullptr), json(nullptr));
        continue;
      }
      const bool abstain = entry.value("abstain", false);
      items.emplace_back(entry.at("id"), abstain ? json(nullptr) : entry.value("label", json(nullptr)));
    }
  } else {
    throw ServiceError(400, "'labels' must be an object or an array");
  }
  if (items.empty()) throw ServiceError(400, "no labels submitted");

  std::lock_guard lock(mu_);
  std::size_t accepted = 0, abstained = 0;
  json rejected = json::array();
  for (const auto& [raw_id, raw_label] : items) {
    std::optional<std::uint64_t> id;
    if (raw_id.is_number_unsigned()) {
      id = raw_id.get<std::uint64_t>();
    } else if (raw_id.is_string()) {
      try {
        std::size_t pos = 0;
        const std::string s = raw_id.get<std::string>();
        const unsigned long long v = std::stoull(s, &pos);
        if (pos == s.size()) id = v;
      } catch (const std::exception&) {
      }
    }
    if (!id) {
      rejected.push_back({{"id", raw_id}, {"reason", "malformed id"}});
      continue;
    }
    if (std::find(queue_.begin(), queue_.end(), *id) == queue_.end()) {
      const bool done = labeled_.contains(*id) || answered_.count(*id);
      rejected.push_back({{"id", *id}, {"reason", done ? "already labeled" : "not queued"}});
      continue;
    }
    json label = nullptr;
    if (!raw_label.is_null()) {
      if (!raw_label.is_string()) {
        rejected.push_back({{"id", *id}, {"reason", "label must be a string or null"}});
        continue;
      }
      const std::string name = raw_label.get<std::string>();
      const auto parsed = parse_label(name);
      if (parsed == ClassLabel::kUnknown) {
        rejected.push_back({{"id", *id}, {"reason", "Unknown is not an assignable label"}});
        continue;
      }
      if (!parsed) {
        rejected.push_back({{"id", *id}, {"reason", "label '" + name + "' outside the taxonomy"}});
        continue;
      }
      label = std::string(to_string(*parsed));
    }
    const std::string ts = utc_timestamp();
    const json e = {{"e", "answer"}, {"id", *id}, {"label", label}, {"analyst", analyst}, {"ts", ts}};
    apply_event(e);
    append_event(e);
    if (!cfg_.state_dir.empty()) {
      append_line(cfg_.state_dir / "audit.jsonl",
                  {{"id", *id}, {"label", label}, {"analyst", analyst}, {"timestamp", ts}});
    }
    (label.is_null() ? abstained : accepted)++;
  }
  return {{"accepted", accepted},
          {"abstained", abstained},
          {"rejected", std::move(rejected)},
          {"queue", queue_.size()},
          {"new_labels", new_labels_}};
}

IterationReport Pipeline::make_report(const ModelSnapshot& snap, std::size_t accepted) const {
  IterationReport r;
  r.step = 0;
  r.step_label = "live";
  r.round = static_cast<int>(snap.version) - 1;
  r.labeled = labeled_.by_provenance();
  r.labeled_total = labeled_.size();
  r.pool_start = pools_.at(Pool::kUnknown).members.size() + queue_.size();
  r.pool_remaining = r.pool_start;
  r.accepted = accepted;
  r.queried = queried_since_;
  r.abstained = abstained_since_;
  r.oracle_queries_used = oracle_total_;
  r.classes = snap.classifier.classes();
  if (!holdout_.empty()) r.metrics = evaluate_classifier(snap.classifier, holdout_);
  return r;
}

json Pipeline::retrain(const json& overrides) {
  std::lock_guard serial(retrain_mu_);
  const auto start = std::chrono::steady_clock::now();
  if (!overrides.is_null() && !overrides.is_object()) {
    throw ServiceError(400, "retrain body must be a JSON object");
  }
  ClassifierOptions opts = cfg_.classifier;
  if (overrides.is_object()) {
    for (const auto& [key, value] : overrides.items()) {
      if (key != "classifier" && key != "seed") {
        throw ServiceError(400, "unknown retrain override '" + key + "'");
      }
    }
    try {
      if (overrides.contains("classifier")) {
        opts.hyper = classifier_hyper_from_json(overrides.at("classifier"));
      }
    } catch (const std::exception& e) {
      throw ServiceError(400, e.what());
    }
  }
  const auto prev = snapshot();
  Dataset train;
  std::size_t accepted = 0;
  {
    std::lock_guard lock(mu_);
    if (new_labels_ == 0) throw ServiceError(409, "no new labels since the last retrain");
    accepted = new_labels_;
    for (const auto& e : labeled_.entries()) {
      train.records.push_back({e.id, labeled_features_.at(e.id), e.label});
    }
  }
  opts.seed = overrides.is_object() && overrides.contains("seed")
                  ? overrides.at("seed").get<std::uint64_t>()
                  : derive_seed(cfg_.seed, prev->version + 1);
  std::shared_ptr<const ModelSnapshot> snap;
  try {
    ClassifierModel clf = train_classifier(train, opts);
    const PartitionSpec known(clf.classes());
    const double th = prev->layer2.threshold_percentile().value_or(5.0);
    DetectorModel l2 = train_layer2(train, known, prev->layer2.hyper(), th);
    if (cfg_.retrain_hook) cfg_.retrain_hook();
    snap = std::make_shared<const ModelSnapshot>(
        ModelSnapshot{prev->version + 1, prev->layer1, std::move(l2), std::move(clf)});
    write_snapshot(*snap);
  } catch (const ServiceError&) {
    throw;
  } catch (const std::exception& e) {
    throw ServiceError(500, std::string("retrain failed, still serving version ") +
                                std::to_string(prev->version) + ": " + e.what());
  }
  json report;
  {
    std::lock_guard lock(mu_);
    IterationReport r = make_report(*snap, accepted);
    r.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report = to_json(r);
    const json e = {{"e", "publish"}, {"version", snap->version}, {"report", report}};
    apply_event(e);
    append_event(e);
  }
  {
    std::lock_guard slock(snap_mu_);
    current_ = snap;
    published_[snap->version] = snap;
  }
  return {{"model_version", snap->version}, {"report", report}};
}

json Pipeline::metrics_history() const {
  std::lock_guard lock(mu_);
  return {{"reports", history_}};
}

std::optional<json> Pipeline::model(std::uint64_t version) const {
  std::shared_ptr<const ModelSnapshot> snap;
  {
    std::lock_guard slock(snap_mu_);
    const auto it = published_.find(version);
    if (it == published_.end()) return std::nullopt;
    snap = it->second;
  }
  return snapshot_to_json(*snap);
}

// ---------------------------------------------------------------------------
// HTTP

HttpService::HttpService(Pipeline& pipeline)
    : pipeline_(pipeline), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  const std::string origin = pipeline_.config().cors_origin;
  srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  auto send = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  // Runs fn and maps exceptions to JSON error responses.
  auto handle = [send](auto fn) {
    return [send, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        send(res, 200, fn(req));
      } catch (const ServiceError& e) {
        send(res, e.status(), {{"error", e.what()}});
      } catch (const json::exception& e) {
        send(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
      } catch (const InvalidArgument& e) {
        send(res, 400, {{"error", e.what()}});
      } catch (const std::exception& e) {
        send(res, 500, {{"error", e.what()}});
      }
    };
  };
  auto body_json = [](const httplib::Request& req) {
    return req.body.empty() ? json(nullptr) : json::parse(req.body);
  };
  auto size_param = [](const httplib::Request& req, const std::string& name)
      -> std::optional<std::uint64_t> {
    if (!req.has_param(name)) return std::nullopt;
    const std::string v = req.get_param_value(name);
    std::size_t pos = 0;
    unsigned long long out = 0;
    try {
      out = std::stoull(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (v.empty() || pos != v.size() || v[0] == '-') {
      throw ServiceError(400, "parameter '" + name + "' must be a non-negative integer");
    }
    return out;
  };

  srv.Get("/status", handle([this](const httplib::Request&) { return pipeline_.status(); }));
  srv.Post("/classify", handle([this, body_json](const httplib::Request& req) {
             return pipeline_.classify(body_json(req));
           }));
  srv.Get("/pools", handle([this, size_param](const httplib::Request& req) {
            const bool ids = req.has_param("include_ids") && req.get_param_value("include_ids") != "0" &&
                             req.get_param_value("include_ids") != "false";
            return pipeline_.pools(ids, size_param(req, "id"));
          }));
  srv.Get("/al/queries", handle([this, size_param](const httplib::Request& req) {
            return pipeline_.al_queries(size_param(req, "limit").value_or(50));
          }));
  srv.Post("/al/labels", handle([this, body_json](const httplib::Request& req) {
             return pipeline_.submit_labels(body_json(req));
           }));
  srv.Post("/retrain", handle([this, body_json](const httplib::Request& req) {
             return pipeline_.retrain(body_json(req));
           }));
  srv.Get("/metrics/history",
          handle([this](const httplib::Request&) { return pipeline_.metrics_history(); }));
  srv.Get(R"(/models/(\d+))", handle([this](const httplib::Request& req) {
            const auto m = pipeline_.model(std::stoull(req.matches[1].str()));
            if (!m) throw ServiceError(404, "no model version " + req.matches[1].str());
            return *m;
          }));
  srv.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send(res, res.status, {{"error", "not found"}});
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind() {
  const auto& cfg = pipeline_.config();
  if (cfg.port == 0) {
    const int port = server_->bind_to_any_port(cfg.host);
    if (port < 0) throw std::runtime_error("cannot bind " + cfg.host);
    return port;
  }
  if (!server_->bind_to_port(cfg.host, cfg.port)) {
    throw std::runtime_error("cannot bind " + cfg.host + ":" + std::to_string(cfg.port) +
                             " (port busy?)");
  }
  return cfg.port;
}

void HttpService::listen() { server_->listen_after_bind(); }

int HttpService::start() {
  const int port = bind();
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void HttpService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace mi2das

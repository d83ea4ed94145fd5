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

#include "mi2das/experiments.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "mi2das/errors.h"
#include "mi2das/hash.h"
#include "mi2das/rng.h"

namespace mi2das {
namespace {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, std::string_view where,
                         std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw InvalidArgument(std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw InvalidArgument("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
std::vector<T> as_vector(const json& j, std::string_view key) {
  if (j.is_array()) return j.get<std::vector<T>>();
  if (j.is_null()) throw InvalidArgument(std::string(key) + " must not be null");
  return {j.get<T>()};
}

std::optional<std::size_t> optional_size(const json& j, std::string_view key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::size_t>();
}

json optional_to_json(const std::optional<std::size_t>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string_view to_string(Layer1Mode m) {
  return m == Layer1Mode::kNovelty ? "novelty" : "outlier";
}

Layer1Mode parse_layer1_mode(const std::string& s) {
  if (s == "novelty") return Layer1Mode::kNovelty;
  if (s == "outlier") return Layer1Mode::kOutlier;
  throw InvalidArgument("unknown paradigm '" + s + "'");
}

std::string_view to_string(SplitMode m) {
  return m == SplitMode::kOfficial ? "official" : "random_stratified";
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the
// exception of the lowest failing index.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Dataset attacks_only(const Dataset& ds) {
  return ds.filter([](const FlowRecord& r) { return r.label && is_attack(*r.label); });
}

// At most `cap` records per class, drawn uniformly; result in id order.
Dataset cap_per_class(const Dataset& ds, std::optional<std::size_t> cap, std::uint64_t seed) {
  if (!cap) return ds;
  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[*ds.records[i].label].push_back(i);
  std::vector<std::size_t> keep;
  for (auto& [label, idx] : by_class) {
    if (idx.size() <= *cap) {
      keep.insert(keep.end(), idx.begin(), idx.end());
      continue;
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label_index(label))));
    for (std::size_t k : sample_without_replacement(idx.size(), *cap, rng)) {
      keep.push_back(idx[k]);
    }
  }
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

Dataset restrict_to(const Dataset& ds, const std::vector<ClassLabel>& classes) {
  return ds.filter([&](const FlowRecord& r) {
    return r.label && std::find(classes.begin(), classes.end(), *r.label) != classes.end();
  });
}

// "key=value" for the main detector hyperparameter and every other one that
// differs from its default.
std::string hyper_label(const json& hyper) {
  const json defaults = hyper_to_json(detector_hyper_from_json({{"kind", hyper.at("kind")}}));
  std::string out;
  for (const auto& [key, value] : hyper.items()) {
    if (key == "kind" || value.is_null()) continue;
    const bool primary = key == "nc" || key == "k" || key == "nu" || key == "n_trees";
    if (!primary && defaults.contains(key) && defaults.at(key) == value) continue;
    if (!out.empty()) out += ", ";
    out += key + "=" + (value.is_string() ? value.get<std::string>() : value.dump());
  }
  return out;
}

void require_full_taxonomy(const ExperimentConfig& cfg) {
  if (cfg.data.kind == DataSource::Kind::kSynthetic &&
      cfg.data.synthetic.n_classes != kNumGroundTruthClasses) {
    throw InvalidArgument("campaign '" + std::string(to_string(cfg.campaign)) +
                          "' needs all fifteen classes (synthetic n_classes = 15)");
  }
}

CampaignReport new_report(const ExperimentConfig& cfg, const PreparedData& data) {
  CampaignReport r;
  r.campaign = std::string(to_string(cfg.campaign));
  r.config = to_json(cfg);
  r.config.erase("threads");
  r.config.erase("output_dir");
  r.config_hash = config_hash(cfg);
  r.dataset_hash = data.fingerprint;
  return r;
}

void finish_report(CampaignReport& r) {
  for (std::size_t i = 0; i < r.runs.size(); ++i) r.runs[i].index = i;
  r.aggregates = aggregate_runs(r.runs);
}

std::string mean_std_cell(const std::map<std::string, AggregateValue>& m, const std::string& key,
                          int digits) {
  const auto it = m.find(key);
  if (it == m.end() || it->second.n == 0) return "";
  return format_mean_std(it->second, digits);
}

std::string mean_cell(const std::map<std::string, AggregateValue>& m, const std::string& key,
                      int digits) {
  const auto it = m.find(key);
  if (it == m.end() || it->second.n == 0) return "";
  return format_metric(it->second.mean, digits);
}

}  // namespace

std::string_view to_string(Campaign c) {
  switch (c) {
    case Campaign::kLayer1: return "layer1";
    case Campaign::kLayer2Openset: return "layer2_openset";
    case Campaign::kAcm: return "acm";
    case Campaign::kIncrementalOneStep: return "incremental_one_step";
    case Campaign::kIncrementalMultiStep: return "incremental_multi_step";
  }
  return "unknown";
}

std::optional<Campaign> parse_campaign(std::string_view text) {
  for (Campaign c : {Campaign::kLayer1, Campaign::kLayer2Openset, Campaign::kAcm,
                     Campaign::kIncrementalOneStep, Campaign::kIncrementalMultiStep}) {
    if (text == to_string(c)) return c;
  }
  if (text == "layer2") return Campaign::kLayer2Openset;
  if (text == "one_step") return Campaign::kIncrementalOneStep;
  if (text == "multi_step") return Campaign::kIncrementalMultiStep;
  return std::nullopt;
}

std::vector<json> expand_grid(const json& j) {
  if (!j.is_object()) throw InvalidArgument("grid spec must be an object");
  std::vector<json> out{json::object()};
  for (const auto& [key, value] : j.items()) {
    if (value.is_array() && key != "kind" && key != "name") {
      if (value.empty()) throw InvalidArgument("empty grid for '" + key + "'");
      std::vector<json> next;
      for (const auto& partial : out) {
        for (const auto& v : value) {
          json p = partial;
          p[key] = v;
          next.push_back(std::move(p));
        }
      }
      out = std::move(next);
    } else {
      for (auto& partial : out) partial[key] = value;
    }
  }
  return out;
}

std::vector<DetectorHyper> expand_detectors(const std::vector<json>& specs) {
  std::vector<DetectorHyper> out;
  for (const auto& spec : specs) {
    for (const auto& j : expand_grid(spec)) out.push_back(detector_hyper_from_json(j));
  }
  return out;
}

std::vector<NamedClassifier> expand_classifiers(const std::vector<json>& specs) {
  std::vector<NamedClassifier> out;
  for (const auto& spec : specs) {
    for (json j : expand_grid(spec)) {
      std::string name = j.value("name", std::string());
      j.erase("name");
      ClassifierHyper hyper = classifier_hyper_from_json(j);
      if (name.empty()) name = std::string(to_string(kind_of(hyper)));
      out.push_back({std::move(name), std::move(hyper)});
    }
  }
  std::map<std::string, int> seen;
  for (const auto& c : out) ++seen[c.name];
  std::map<std::string, int> counter;
  for (auto& c : out) {
    if (seen[c.name] > 1) c.name += "#" + std::to_string(counter[c.name]++);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Data

ColumnSchema edge_iiotset_schema() {
  ColumnSchema s;
  s.label_column = "Attack_type";
  s.drop = {"Attack_label",       "frame.time",         "ip.src_host",
            "ip.dst_host",        "arp.src.proto_ipv4", "arp.dst.proto_ipv4",
            "tcp.srcport",        "tcp.dstport",        "udp.port"};
  s.ordinal = {"http.file_data",        "http.request.uri.query", "http.request.method",
               "http.referer",          "http.request.full_uri",  "http.request.version",
               "tcp.options",           "tcp.payload",            "dns.qry.name",
               "dns.qry.name.len",      "mqtt.conack.flags",      "mqtt.msg",
               "mqtt.protoname",        "mqtt.topic"};
  s.expected_dim = 53;
  s.train_file = "train.csv";
  s.test_file = "test.csv";
  return s;
}

Dataset load_official_dataset(const std::filesystem::path& dir, const ColumnSchema& schema) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("dataset directory " + dir.string() +
                    " not found; set --dataset-dir or MI2DAS_DATA_DIR to the folder holding " +
                    schema.train_file + " and " + schema.test_file);
  }
  return encode_official(load_official_split(dir, schema), schema);
}

Dataset encode_official(const RawTable& raw, const ColumnSchema& schema) {
  RawTable fit;
  fit.columns = raw.columns;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw.partition[i] != OfficialPartition::kTrain) continue;
    fit.cells.push_back(raw.cells[i]);
    fit.labels.push_back(raw.labels[i]);
    fit.ids.push_back(raw.ids[i]);
    fit.partition.push_back(raw.partition[i]);
  }
  return preprocess(raw, schema, &fit);
}

PreparedData prepare_data(const DataSource& source, const SplitSpec& split) {
  Dataset full;
  if (source.kind == DataSource::Kind::kSynthetic) {
    full = generate_synthetic(source.synthetic);
  } else {
    const ColumnSchema schema = source.schema ? load_schema(*source.schema) : edge_iiotset_schema();
    full = load_official_dataset(source.dir, schema);
  }
  PreparedData out;
  out.fingerprint = dataset_fingerprint(full);
  TrainTest tt = make_split(full, split);
  out.train = std::move(tt.train);
  out.test = std::move(tt.test);
  return out;
}

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (replicates < 1) throw InvalidArgument("replicates must be >= 1");
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
  if (data.kind == DataSource::Kind::kSynthetic) data.synthetic.validate();
  if (data.kind == DataSource::Kind::kOfficial && data.dir.empty()) {
    throw InvalidArgument("official data source needs a directory");
  }
  switch (campaign) {
    case Campaign::kLayer1:
      if (layer1.paradigms.empty() || layer1.detectors.empty() || layer1.th_per.empty() ||
          layer1.test_sizes.empty()) {
        throw InvalidArgument("layer1 needs paradigms, detectors, th_per and test_sizes");
      }
      for (double t : layer1.th_per) {
        if (!(t >= 0.0 && t <= 100.0)) throw InvalidArgument("th_per must lie in [0, 100]");
      }
      if (layer1.top_k == 0) throw InvalidArgument("top_k must be positive");
      expand_detectors(layer1.detectors);
      break;
    case Campaign::kLayer2Openset:
      if (layer2.n_known.empty() || layer2.detectors.empty()) {
        throw InvalidArgument("layer2 needs n_known and detectors");
      }
      for (int k : layer2.n_known) {
        if (k < 1 || k > kNumAttackClasses - 1) throw InvalidArgument("n_known must lie in [1, 13]");
      }
      if (!(layer2.th_per >= 0.0 && layer2.th_per <= 100.0)) {
        throw InvalidArgument("th_per must lie in [0, 100]");
      }
      expand_detectors(layer2.detectors);
      break;
    case Campaign::kAcm:
      if (acm.scenarios.empty() || acm.classifiers.empty()) {
        throw InvalidArgument("acm needs scenarios and classifiers");
      }
      for (const auto& s : acm.scenarios) {
        if (s.n_known < 2 || s.n_known > kNumAttackClasses - 1) {
          throw InvalidArgument("acm n_known must lie in [2, 13]");
        }
      }
      expand_classifiers(acm.classifiers);
      break;
    case Campaign::kIncrementalOneStep:
      if (incremental.n_known.empty() || incremental.strategies.empty()) {
        throw InvalidArgument("incremental_one_step needs n_known and strategies");
      }
      for (int k : incremental.n_known) {
        if (k < 1 || k > kNumAttackClasses - 1) throw InvalidArgument("n_known must lie in [1, 13]");
      }
      update_config_from_json(incremental.update).validate();
      break;
    case Campaign::kIncrementalMultiStep:
      if (incremental.logics.empty()) throw InvalidArgument("incremental_multi_step needs logics");
      validate_schedule(incremental.schedule);
      update_config_from_json(incremental.update).validate();
      break;
  }
}

ExperimentConfig experiment_config_from_json(const json& j) {
  reject_unknown_keys(j, "experiment config",
                      {"campaign", "data", "split", "seed_base", "replicates", "threads",
                       "output_dir", "layer1", "layer2", "acm", "incremental"});
  ExperimentConfig cfg;
  if (!j.contains("campaign")) throw InvalidArgument("experiment config needs a 'campaign'");
  const auto campaign = parse_campaign(j.at("campaign").get<std::string>());
  if (!campaign) {
    throw InvalidArgument("unknown campaign '" + j.at("campaign").get<std::string>() + "'");
  }
  cfg.campaign = *campaign;

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown_keys(d, "data", {"source", "synthetic", "dir", "schema"});
    const std::string source = d.value("source", std::string("synthetic"));
    if (source == "synthetic") {
      cfg.data.kind = DataSource::Kind::kSynthetic;
      if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        reject_unknown_keys(s, "data.synthetic",
                            {"n_classes", "dim", "samples_per_class", "class_separation",
                             "normal_modes", "seed"});
        auto& sc = cfg.data.synthetic;
        sc.n_classes = s.value("n_classes", sc.n_classes);
        sc.dim = s.value("dim", sc.dim);
        sc.samples_per_class = s.value("samples_per_class", sc.samples_per_class);
        sc.class_separation = s.value("class_separation", sc.class_separation);
        sc.normal_modes = s.value("normal_modes", sc.normal_modes);
        sc.seed = s.value("seed", sc.seed);
      }
    } else if (source == "official") {
      cfg.data.kind = DataSource::Kind::kOfficial;
      cfg.data.dir = d.value("dir", std::string());
      if (d.contains("schema") && !d.at("schema").is_null()) {
        cfg.data.schema = d.at("schema").get<std::string>();
      }
    } else {
      throw InvalidArgument("unknown data source '" + source + "'");
    }
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    reject_unknown_keys(s, "split", {"mode", "train_fraction", "seed"});
    const std::string mode = s.value("mode", std::string("random_stratified"));
    if (mode == "official") {
      cfg.split.mode = SplitMode::kOfficial;
    } else if (mode == "random_stratified") {
      cfg.split.mode = SplitMode::kRandomStratified;
    } else {
      throw InvalidArgument("unknown split mode '" + mode + "'");
    }
    cfg.split.train_fraction = s.value("train_fraction", cfg.split.train_fraction);
    cfg.split.seed = s.value("seed", cfg.split.seed);
  }
  cfg.seed_base = j.value("seed_base", cfg.seed_base);
  cfg.replicates = j.value("replicates", cfg.replicates);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.output_dir = j.value("output_dir", std::string());

  if (j.contains("layer1")) {
    const json& l = j.at("layer1");
    reject_unknown_keys(l, "layer1",
                        {"paradigms", "contamination", "detectors", "th_per", "test_sizes", "top_k"});
    auto& s = cfg.layer1;
    if (l.contains("paradigms")) {
      s.paradigms.clear();
      for (const auto& p : as_vector<std::string>(l.at("paradigms"), "paradigms")) {
        s.paradigms.push_back(parse_layer1_mode(p));
      }
    }
    if (l.contains("contamination")) {
      const json& c = l.at("contamination");
      reject_unknown_keys(c, "layer1.contamination", {"normal", "attack"});
      s.contamination.normal = c.value("normal", s.contamination.normal);
      s.contamination.attack = c.value("attack", s.contamination.attack);
    }
    if (l.contains("detectors")) s.detectors = as_vector<json>(l.at("detectors"), "detectors");
    if (l.contains("th_per")) s.th_per = as_vector<double>(l.at("th_per"), "th_per");
    if (l.contains("test_sizes")) {
      s.test_sizes = as_vector<std::size_t>(l.at("test_sizes"), "test_sizes");
    }
    s.top_k = l.value("top_k", s.top_k);
  }
  if (j.contains("layer2")) {
    const json& l = j.at("layer2");
    reject_unknown_keys(l, "layer2", {"n_known", "limit", "max_per_class", "detectors", "th_per"});
    auto& s = cfg.layer2;
    if (l.contains("n_known")) s.n_known = as_vector<int>(l.at("n_known"), "n_known");
    s.limit = optional_size(l, "limit");
    s.max_per_class = optional_size(l, "max_per_class");
    if (l.contains("detectors")) s.detectors = as_vector<json>(l.at("detectors"), "detectors");
    s.th_per = l.value("th_per", s.th_per);
  }
  if (j.contains("acm")) {
    const json& a = j.at("acm");
    reject_unknown_keys(a, "acm", {"scenarios", "classifiers", "max_train_per_class"});
    auto& s = cfg.acm;
    if (a.contains("scenarios")) {
      s.scenarios.clear();
      for (const auto& sc : a.at("scenarios")) {
        reject_unknown_keys(sc, "acm scenario", {"n_known", "limit"});
        s.scenarios.push_back({sc.at("n_known").get<int>(), optional_size(sc, "limit")});
      }
    }
    if (a.contains("classifiers")) {
      s.classifiers = as_vector<json>(a.at("classifiers"), "classifiers");
    }
    s.max_train_per_class = optional_size(a, "max_train_per_class");
  }
  if (j.contains("incremental")) {
    const json& in = j.at("incremental");
    reject_unknown_keys(in, "incremental", {"n_known", "strategies", "logics", "schedule", "update"});
    auto& s = cfg.incremental;
    if (in.contains("n_known")) s.n_known = as_vector<int>(in.at("n_known"), "n_known");
    if (in.contains("strategies")) {
      s.strategies.clear();
      for (const auto& name : as_vector<std::string>(in.at("strategies"), "strategies")) {
        const auto st = parse_update_strategy(name);
        if (!st) throw InvalidArgument("unknown update strategy '" + name + "'");
        s.strategies.push_back(*st);
      }
    }
    if (in.contains("logics")) {
      s.logics.clear();
      for (const auto& name : as_vector<std::string>(in.at("logics"), "logics")) {
        const auto lg = parse_training_logic(name);
        if (!lg) throw InvalidArgument("unknown training logic '" + name + "'");
        s.logics.push_back(*lg);
      }
    }
    if (in.contains("schedule")) {
      s.schedule.clear();
      for (const auto& step : in.at("schedule")) {
        if (!step.is_array() || step.size() != 2) {
          throw InvalidArgument("schedule entries are [n_known, n_unknown] pairs");
        }
        s.schedule.emplace_back(step[0].get<int>(), step[1].get<int>());
      }
    }
    if (in.contains("update")) {
      s.update = in.at("update");
      update_config_from_json(s.update);
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["campaign"] = std::string(to_string(cfg.campaign));
  if (cfg.data.kind == DataSource::Kind::kSynthetic) {
    const auto& s = cfg.data.synthetic;
    j["data"] = {{"source", "synthetic"},
                 {"synthetic",
                  {{"n_classes", s.n_classes},
                   {"dim", s.dim},
                   {"samples_per_class", s.samples_per_class},
                   {"class_separation", s.class_separation},
                   {"normal_modes", s.normal_modes},
                   {"seed", s.seed}}}};
  } else {
    j["data"] = {{"source", "official"},
                 {"dir", cfg.data.dir.string()},
                 {"schema", cfg.data.schema ? json(cfg.data.schema->string()) : json(nullptr)}};
  }
  j["split"] = {{"mode", std::string(to_string(cfg.split.mode))},
                {"train_fraction", cfg.split.train_fraction},
                {"seed", cfg.split.seed}};
  j["seed_base"] = cfg.seed_base;
  j["replicates"] = cfg.replicates;
  j["threads"] = cfg.threads;
  j["output_dir"] = cfg.output_dir.string();

  switch (cfg.campaign) {
    case Campaign::kLayer1: {
      const auto& s = cfg.layer1;
      json paradigms = json::array();
      for (auto p : s.paradigms) paradigms.push_back(std::string(to_string(p)));
      j["layer1"] = {{"paradigms", paradigms},
                     {"contamination",
                      {{"normal", s.contamination.normal}, {"attack", s.contamination.attack}}},
                     {"detectors", s.detectors},
                     {"th_per", s.th_per},
                     {"test_sizes", s.test_sizes},
                     {"top_k", s.top_k}};
      break;
    }
    case Campaign::kLayer2Openset: {
      const auto& s = cfg.layer2;
      j["layer2"] = {{"n_known", s.n_known},
                     {"limit", optional_to_json(s.limit)},
                     {"max_per_class", optional_to_json(s.max_per_class)},
                     {"detectors", s.detectors},
                     {"th_per", s.th_per}};
      break;
    }
    case Campaign::kAcm: {
      json scenarios = json::array();
      for (const auto& sc : cfg.acm.scenarios) {
        scenarios.push_back({{"n_known", sc.n_known}, {"limit", optional_to_json(sc.limit)}});
      }
      j["acm"] = {{"scenarios", scenarios},
                  {"classifiers", cfg.acm.classifiers},
                  {"max_train_per_class", optional_to_json(cfg.acm.max_train_per_class)}};
      break;
    }
    case Campaign::kIncrementalOneStep:
    case Campaign::kIncrementalMultiStep: {
      const auto& s = cfg.incremental;
      json strategies = json::array();
      for (auto st : s.strategies) strategies.push_back(std::string(to_string(st)));
      json logics = json::array();
      for (auto lg : s.logics) logics.push_back(std::string(to_string(lg)));
      json schedule = json::array();
      for (auto [k, u] : s.schedule) schedule.push_back({k, u});
      j["incremental"] = {{"n_known", s.n_known},
                          {"strategies", strategies},
                          {"logics", logics},
                          {"schedule", schedule},
                          {"update", to_json(update_config_from_json(s.update))}};
      break;
    }
  }
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j.erase("threads");
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

ExperimentConfig profile_config(Campaign campaign, std::string_view profile,
                                const std::filesystem::path& dataset_dir) {
  ExperimentConfig cfg;
  cfg.campaign = campaign;
  const bool desk = profile == "desk";
  if (!desk && profile != "full") {
    throw InvalidArgument("unknown profile '" + std::string(profile) + "' (desk or full)");
  }
  if (desk) {
    cfg.data.kind = DataSource::Kind::kSynthetic;
    cfg.data.synthetic = desk_profile(7);
    cfg.split = {SplitMode::kRandomStratified, 0.5, 0};
    cfg.replicates = 2;
    cfg.layer1.detectors = {json{{"kind", "gmm"}, {"nc", {1, 2, 3}}},
                            json{{"kind", "lof"}, {"k", {10, 20}}},
                            json{{"kind", "ocsvm"}, {"nu", {0.05, 0.1}}}};
    cfg.layer1.th_per = {1.0, 5.0, 10.0};
    cfg.layer1.test_sizes = {50, 100};
    cfg.layer2.limit = 5;
    cfg.layer2.detectors = {json{{"kind", "gmm"}, {"nc", 1}}, json{{"kind", "lof"}, {"k", 10}},
                            json{{"kind", "ocsvm"}, {"nu", 0.05}},
                            json{{"kind", "iforest"}, {"n_trees", 50}, {"subsample", 64}}};
    cfg.acm.scenarios = {{4, 5}, {7, 5}, {10, 5}, {13, 5}};
    cfg.acm.classifiers = {json{{"kind", "random_forest"}, {"n_trees", 50}},
                           json{{"kind", "knn"}, {"k", 5}},
                           json{{"kind", "gbt"}, {"n_rounds", 30}, {"max_depth", 3}},
                           json{{"kind", "svm"}},
                           json{{"kind", "logreg"}}};
    cfg.incremental.n_known = {4, 7};
    cfg.incremental.update = {{"classifier", {{"kind", "random_forest"}, {"n_trees", 50}}},
                              {"al_budget", 100},
                              {"al_batch_size", 20},
                              {"seeds_per_class", 10},
                              {"max_rounds", 10}};
  } else {
    cfg.data.kind = DataSource::Kind::kOfficial;
    cfg.data.dir = dataset_dir;
    cfg.split.mode = SplitMode::kOfficial;
    cfg.replicates = 5;
    cfg.layer1.detectors = {json{{"kind", "gmm"}, {"nc", {1, 2, 3, 4, 5, 6}}},
                            json{{"kind", "lof"}, {"k", {10, 20, 35, 50}}},
                            json{{"kind", "ocsvm"}, {"nu", {0.01, 0.05, 0.1}}}};
    cfg.layer2.limit = 50;
    cfg.layer2.max_per_class = 2000;
    cfg.layer2.detectors = {json{{"kind", "gmm"}, {"nc", {1, 2, 3}}},
                            json{{"kind", "lof"}, {"k", 20}},
                            json{{"kind", "ocsvm"}, {"nu", 0.05}},
                            json{{"kind", "iforest"}, {"n_trees", {100, 200}}}};
    cfg.acm.classifiers = {
        json{{"kind", "random_forest"}, {"n_trees", 100}},
        json{{"kind", "knn"}, {"k", 5}},
        json{{"name", "xgboost"}, {"kind", "gbt"}, {"n_rounds", 100}, {"max_depth", 6},
             {"learning_rate", 0.3}},
        json{{"name", "lightgbm"}, {"kind", "gbt"}, {"n_rounds", 200}, {"max_depth", 8},
             {"learning_rate", 0.1}},
        json{{"kind", "svm"}, {"max_train", 10000}},
        json{{"kind", "logreg"}}};
    cfg.incremental.update = {{"classifier", {{"kind", "random_forest"}, {"n_trees", 100}}}};
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Counting

std::size_t acm_runs_per_classifier(const AcmSettings& acm) {
  std::size_t n = 0;
  for (const auto& sc : acm.scenarios) {
    const std::uint64_t all = binomial(kNumAttackClasses, sc.n_known);
    n += sc.limit ? std::min<std::uint64_t>(*sc.limit, all) : all;
  }
  return n;
}

std::size_t planned_runs(const ExperimentConfig& cfg) {
  switch (cfg.campaign) {
    case Campaign::kLayer1:
      return cfg.layer1.paradigms.size() * expand_detectors(cfg.layer1.detectors).size() *
             cfg.layer1.th_per.size() * cfg.layer1.test_sizes.size();
    case Campaign::kLayer2Openset: {
      std::size_t partitions = 0;
      for (int k : cfg.layer2.n_known) {
        const std::uint64_t all = binomial(kNumAttackClasses, k);
        partitions += cfg.layer2.limit ? std::min<std::uint64_t>(*cfg.layer2.limit, all) : all;
      }
      return partitions * expand_detectors(cfg.layer2.detectors).size();
    }
    case Campaign::kAcm:
      return acm_runs_per_classifier(cfg.acm) * expand_classifiers(cfg.acm.classifiers).size();
    case Campaign::kIncrementalOneStep:
      return cfg.incremental.n_known.size() * cfg.incremental.strategies.size() *
             static_cast<std::size_t>(cfg.replicates);
    case Campaign::kIncrementalMultiStep:
      return (cfg.incremental.schedule.size() - 1) * cfg.incremental.logics.size() *
             static_cast<std::size_t>(cfg.replicates);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Aggregation

std::map<std::string, std::map<std::string, AggregateValue>> aggregate_runs(
    const std::vector<RunRecord>& runs) {
  std::map<std::string, std::vector<MetricBlock>> groups;
  for (const auto& r : runs) groups[r.group].push_back(r.metrics);
  std::map<std::string, std::map<std::string, AggregateValue>> out;
  for (const auto& [group, blocks] : groups) out[group] = aggregate(blocks);
  return out;
}

std::array<double, 5> five_number_summary(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("five-number summary of an empty set");
  return {percentile(values, 0.0), percentile(values, 25.0), percentile(values, 50.0),
          percentile(values, 75.0), percentile(values, 100.0)};
}

// ---------------------------------------------------------------------------
// Layer 1

CampaignReport run_layer1(const ExperimentConfig& cfg) {
  cfg.validate();
  const PreparedData data = prepare_data(cfg.data, cfg.split);
  CampaignReport report = new_report(cfg, data);
  const auto& s = cfg.layer1;
  const std::vector<DetectorHyper> grid = expand_detectors(s.detectors);

  // One balanced test set per size, shared by every model.
  std::vector<Dataset> test_sets;
  std::vector<json> test_info;
  std::size_t normal_avail = 0, attack_avail = 0;
  for (const auto& r : data.test.records) {
    (r.label == ClassLabel::kNormal ? normal_avail : attack_avail)++;
  }
  for (std::size_t t = 0; t < s.test_sizes.size(); ++t) {
    const std::size_t requested = s.test_sizes[t];
    const std::size_t effective = std::min({requested, normal_avail, attack_avail});
    if (effective == 0) throw DataError("test split holds no normal or no attack records");
    test_sets.push_back(
        sample_balanced_testset(data.test, effective, derive_seed(cfg.seed_base, 100 + t)));
    test_info.push_back({{"requested_per_side", requested}, {"per_side", effective}});
  }

  struct Unit {
    Layer1Mode mode;
    std::size_t hyper;
  };
  std::vector<Unit> units;
  for (auto mode : s.paradigms) {
    for (std::size_t h = 0; h < grid.size(); ++h) units.push_back({mode, h});
  }
  std::vector<std::vector<RunRecord>> results(units.size());
  parallel_for(units.size(), cfg.threads, [&](std::size_t u) {
    const Unit& unit = units[u];
    Layer1TrainConfig tc;
    tc.mode = unit.mode;
    tc.contamination = s.contamination;
    tc.detector = grid[unit.hyper];
    tc.seed = derive_seed(cfg.seed_base, 1);
    const Dataset fitting = layer1_fitting_set(data.train, tc);
    const DetectorModel fitted = fit_detector(fitting, tc.detector);
    const json hyper = hyper_to_json(tc.detector);
    for (double th : s.th_per) {
      const DetectorModel model = calibrate_threshold(fitted, fitting, th);
      for (std::size_t t = 0; t < test_sets.size(); ++t) {
        std::vector<bool> truth, pred;
        for (const auto& r : test_sets[t].records) {
          truth.push_back(*r.label != ClassLabel::kNormal);
          pred.push_back(model.predict(r.features) == Verdict::kOutlier);
        }
        RunRecord rec;
        rec.group = std::string(to_string(unit.mode)) + "/" + std::to_string(s.test_sizes[t]);
        rec.descriptor = {{"paradigm", std::string(to_string(unit.mode))},
                          {"detector", hyper},
                          {"th_per", th},
                          {"test", test_info[t]},
                          {"fitting_records", fitting.size()}};
        rec.metrics = binary_metrics(binary_confusion(truth, pred));
        rec.extra = {{"threshold", *model.threshold()}};
        results[u].push_back(std::move(rec));
      }
    }
  });
  for (auto& r : results) {
    for (auto& rec : r) report.runs.push_back(std::move(rec));
  }
  finish_report(report);

  // Top-k per (paradigm, test size) by accuracy; earlier runs win ties.
  std::vector<std::vector<std::string>> rows, all_rows;
  std::map<std::string, std::vector<const RunRecord*>> by_setting;
  for (const auto& r : report.runs) by_setting[r.group].push_back(&r);
  for (auto mode : s.paradigms) {
    for (std::size_t size : s.test_sizes) {
      const std::string group = std::string(to_string(mode)) + "/" + std::to_string(size);
      auto runs = by_setting[group];
      std::stable_sort(runs.begin(), runs.end(), [](const RunRecord* a, const RunRecord* b) {
        return a->metrics.accuracy.value_or(-1.0) > b->metrics.accuracy.value_or(-1.0);
      });
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const RunRecord& r = *runs[i];
        std::string setting = std::string(to_string(mode));
        setting[0] = static_cast<char>(std::toupper(setting[0]));
        const json& d = r.descriptor.at("detector");
        std::ostringstream th;
        th << r.descriptor.at("th_per").get<double>();
        std::vector<std::string> row{setting,
                                     std::to_string(size) + "/" + std::to_string(size),
                                     d.at("kind").get<std::string>(),
                                     hyper_label(d) + ", th_per=" + th.str(),
                                     format_metric(r.metrics.accuracy, 3),
                                     format_metric(r.metrics.tpr, 3),
                                     format_metric(r.metrics.fpr, 3),
                                     format_metric(r.metrics.precision, 3)};
        if (i < s.top_k) rows.push_back(row);
        all_rows.push_back(std::move(row));
      }
    }
  }
  const std::vector<std::string> header{"Setting", "Test", "Detector", "Parameter",
                                        "Acc.",    "TPR",  "FPR",      "Pr."};
  report.tables["layer1_top.csv"] = to_csv(header, rows);
  report.tables["layer1_all.csv"] = to_csv(header, all_rows);
  return report;
}

// ---------------------------------------------------------------------------
// Layer 2

CampaignReport run_layer2(const ExperimentConfig& cfg) {
  cfg.validate();
  require_full_taxonomy(cfg);
  const PreparedData data = prepare_data(cfg.data, cfg.split);
  CampaignReport report = new_report(cfg, data);
  const auto& s = cfg.layer2;
  const std::vector<DetectorHyper> grid = expand_detectors(s.detectors);
  const Dataset train = cap_per_class(attacks_only(data.train), s.max_per_class,
                                      derive_seed(cfg.seed_base, 2));
  const Dataset test = cap_per_class(attacks_only(data.test), s.max_per_class,
                                     derive_seed(cfg.seed_base, 3));

  struct Unit {
    int n_known;
    PartitionSpec part;
    std::size_t hyper;
  };
  std::vector<Unit> units;
  for (int k : s.n_known) {
    for (auto& part : enumerate_partitions(k, s.limit, derive_seed(cfg.seed_base, k))) {
      for (std::size_t h = 0; h < grid.size(); ++h) units.push_back({k, part, h});
    }
  }
  std::vector<RunRecord> runs(units.size());
  parallel_for(units.size(), cfg.threads, [&](std::size_t u) {
    const Unit& unit = units[u];
    const DetectorModel l2 = train_layer2(train, unit.part, grid[unit.hyper], s.th_per);
    std::vector<bool> truth_known;
    std::vector<Pool> pools;
    for (const auto& r : test.records) {
      truth_known.push_back(unit.part.is_known(*r.label));
      pools.push_back(l2.predict(r.features) == Verdict::kInlier ? Pool::kKnownAttack
                                                                 : Pool::kUnknown);
    }
    const OpensetRecall rec = openset_recall(truth_known, pools);
    const json hyper = hyper_to_json(grid[unit.hyper]);
    RunRecord& out = runs[u];
    out.group = hyper.at("kind").get<std::string>() + "[" + hyper_label(hyper) + "]/" +
                std::to_string(unit.n_known) + "K";
    out.descriptor = {{"n_known", unit.n_known},
                      {"known", to_json(unit.part)},
                      {"detector", hyper},
                      {"th_per", s.th_per}};
    out.metrics.known_recall = rec.known_recall;
    out.metrics.unknown_recall = rec.unknown_recall;
  });
  report.runs = std::move(runs);
  finish_report(report);

  json boxes = json::array();
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> detector_names;
  for (const auto& h : grid) {
    const json hyper = hyper_to_json(h);
    detector_names.push_back(hyper.at("kind").get<std::string>() + "[" + hyper_label(hyper) + "]");
  }
  for (const auto& name : detector_names) {
    for (int k : s.n_known) {
      const std::string group = name + "/" + std::to_string(k) + "K";
      for (const char* metric : {"known_recall", "unknown_recall"}) {
        std::vector<double> values;
        for (const auto& r : report.runs) {
          if (r.group != group) continue;
          const auto v = r.metrics.scalars().at(metric);
          if (v) values.push_back(*v);
        }
        if (values.empty()) continue;
        const auto f = five_number_summary(values);
        boxes.push_back({{"detector", name},
                         {"n_known", k},
                         {"metric", metric},
                         {"n", values.size()},
                         {"min", f[0]},
                         {"q1", f[1]},
                         {"median", f[2]},
                         {"q3", f[3]},
                         {"max", f[4]}});
      }
      const auto& agg = report.aggregates[group];
      rows.push_back({name, std::to_string(k), mean_std_cell(agg, "known_recall", 3),
                      mean_std_cell(agg, "unknown_recall", 3)});
    }
    // Pooled over every n_known.
    std::vector<MetricBlock> blocks;
    for (const auto& r : report.runs) {
      if (r.group.rfind(name + "/", 0) == 0) blocks.push_back(r.metrics);
    }
    const auto agg = aggregate(blocks);
    rows.push_back({name, "all", mean_std_cell(agg, "known_recall", 3),
                    mean_std_cell(agg, "unknown_recall", 3)});
  }
  report.figures["boxplots"] = std::move(boxes);
  report.tables["layer2.csv"] =
      to_csv({"Detector", "Known", "Known recall", "Unknown recall"}, rows);
  return report;
}

// ---------------------------------------------------------------------------
// Attack classification

CampaignReport run_acm(const ExperimentConfig& cfg) {
  cfg.validate();
  require_full_taxonomy(cfg);
  const PreparedData data = prepare_data(cfg.data, cfg.split);
  CampaignReport report = new_report(cfg, data);
  const auto& s = cfg.acm;
  const std::vector<NamedClassifier> models = expand_classifiers(s.classifiers);
  const Dataset train = cap_per_class(attacks_only(data.train), s.max_train_per_class,
                                      derive_seed(cfg.seed_base, 4));
  const Dataset test = attacks_only(data.test);

  struct Unit {
    int n_known;
    PartitionSpec part;
    std::size_t model;
  };
  std::vector<Unit> units;
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (const auto& sc : s.scenarios) {
      for (auto& part : enumerate_partitions(sc.n_known, sc.limit,
                                             derive_seed(cfg.seed_base, sc.n_known))) {
        units.push_back({sc.n_known, part, m});
      }
    }
  }
  std::vector<RunRecord> runs(units.size());
  parallel_for(units.size(), cfg.threads, [&](std::size_t u) {
    const Unit& unit = units[u];
    ClassifierOptions opts;
    opts.hyper = models[unit.model].hyper;
    opts.seed = derive_seed(cfg.seed_base, u);
    const Dataset known_train = restrict_to(train, unit.part.known());
    const ClassifierModel clf = train_classifier(known_train, opts);
    RunRecord& out = runs[u];
    out.group = models[unit.model].name;
    out.descriptor = {{"classifier", models[unit.model].name},
                      {"hyper", hyper_to_json(opts.hyper)},
                      {"n_known", unit.n_known},
                      {"known", to_json(unit.part)},
                      {"seed", opts.seed}};
    out.metrics = evaluate_classifier(clf, restrict_to(test, unit.part.known()));
    out.extra = {{"train_records", known_train.size()}};
  });
  report.runs = std::move(runs);
  finish_report(report);

  std::vector<std::vector<std::string>> rows;
  json boxes = json::array();
  for (const auto& m : models) {
    const auto& agg = report.aggregates[m.name];
    rows.push_back({m.name, mean_std_cell(agg, "macro_f1", 3), mean_std_cell(agg, "weighted_f1", 3),
                    mean_std_cell(agg, "macro_accuracy", 3),
                    mean_std_cell(agg, "micro_accuracy", 3)});
    for (const auto& sc : s.scenarios) {
      std::vector<double> values;
      for (const auto& r : report.runs) {
        if (r.group == m.name && r.descriptor.at("n_known").get<int>() == sc.n_known &&
            r.metrics.macro_f1) {
          values.push_back(*r.metrics.macro_f1);
        }
      }
      if (values.empty()) continue;
      const auto f = five_number_summary(values);
      boxes.push_back({{"classifier", m.name},
                       {"n_known", sc.n_known},
                       {"metric", "macro_f1"},
                       {"n", values.size()},
                       {"min", f[0]},
                       {"q1", f[1]},
                       {"median", f[2]},
                       {"q3", f[3]},
                       {"max", f[4]}});
    }
  }
  report.figures["boxplots"] = std::move(boxes);
  report.tables["acm.csv"] = to_csv(
      {"Model", "Macro-F1", "Weighted-F1", "Macro-Accuracy", "Micro-Accuracy"}, rows);
  return report;
}

// ---------------------------------------------------------------------------
// Incremental

namespace {

std::string method_name(UpdateStrategy s) {
  switch (s) {
    case UpdateStrategy::kSelfTraining: return "Self-training";
    case UpdateStrategy::kLabelSpreading: return "Label Spreading";
    case UpdateStrategy::kLabelPropagation: return "Label Propagation";
    case UpdateStrategy::kActiveLearning: return "Active Learning";
  }
  return "";
}

std::string logic_name(TrainingLogic l) {
  return l == TrainingLogic::kSeedBased ? "Seed-based" : "Augmentation";
}

json step_curve(const StepOutcome& step) {
  json rounds = json::array();
  for (const auto& r : step.rounds) {
    rounds.push_back({{"round", r.round},
                      {"pool_remaining", r.pool_remaining},
                      {"labeled_total", r.labeled_total},
                      {"macro_f1", r.metrics.macro_f1 ? json(*r.metrics.macro_f1) : json(nullptr)}});
  }
  return rounds;
}

CampaignReport run_one_step_campaign(const ExperimentConfig& cfg, const PreparedData& data) {
  CampaignReport report = new_report(cfg, data);
  const auto& s = cfg.incremental;
  const Dataset train = attacks_only(data.train);
  const Dataset test = attacks_only(data.test);
  const UpdateConfig base = update_config_from_json(s.update);
  const auto replicates = static_cast<std::size_t>(cfg.replicates);

  // Known sets and update seeds are shared by every strategy, so strategy
  // comparisons are paired.
  struct Unit {
    int n_known;
    std::size_t replicate;
    std::vector<ClassLabel> known;
    std::uint64_t seed;
    UpdateStrategy strategy;
  };
  std::vector<Unit> units;
  for (int k : s.n_known) {
    Rng rng(derive_seed(cfg.seed_base, 300 + static_cast<std::uint64_t>(k)));
    std::vector<std::vector<ClassLabel>> known_sets;
    for (std::size_t r = 0; r < replicates; ++r) {
      std::vector<ClassLabel> known;
      for (std::size_t i : sample_without_replacement(kNumAttackClasses, k, rng)) {
        known.push_back(attack_classes()[i]);
      }
      std::sort(known.begin(), known.end());
      known_sets.push_back(std::move(known));
    }
    for (auto strategy : s.strategies) {
      for (std::size_t r = 0; r < replicates; ++r) {
        const std::uint64_t seed =
            derive_seed(cfg.seed_base, static_cast<std::uint64_t>(k) * 1000 + r);
        units.push_back({k, r, known_sets[r], seed, strategy});
      }
    }
  }
  std::vector<RunRecord> runs(units.size());
  parallel_for(units.size(), cfg.threads, [&](std::size_t u) {
    const Unit& unit = units[u];
    UpdateConfig uc = base;
    uc.strategy = unit.strategy;
    uc.seed = unit.seed;
    const IncrementalRun run = run_one_step(train, test, unit.known, uc);
    const IterationReport& last = run.steps.back().rounds.back();
    RunRecord& out = runs[u];
    out.group = std::to_string(unit.n_known) + "K/" + std::string(to_string(unit.strategy));
    out.descriptor = {{"n_known", unit.n_known},
                      {"replicate", unit.replicate},
                      {"known", label_names(unit.known)},
                      {"strategy", std::string(to_string(unit.strategy))},
                      {"seed", unit.seed}};
    out.metrics = last.metrics;
    out.extra = {{"final_report", to_json(last, false)}, {"curve", step_curve(run.steps.back())}};
  });
  report.runs = std::move(runs);
  finish_report(report);

  for (int k : s.n_known) {
    std::vector<std::vector<std::string>> rows;
    for (auto strategy : s.strategies) {
      const auto& agg =
          report.aggregates[std::to_string(k) + "K/" + std::string(to_string(strategy))];
      rows.push_back({method_name(strategy), mean_std_cell(agg, "macro_f1", 4),
                      mean_std_cell(agg, "balanced_accuracy", 4),
                      mean_std_cell(agg, "accuracy", 4)});
    }
    report.tables["one_step_" + std::to_string(k) + "K.csv"] =
        to_csv({"Method", "Macro F1", "Balanced Acc", "Acc"}, rows);
  }
  return report;
}

CampaignReport run_multi_step_campaign(const ExperimentConfig& cfg, const PreparedData& data) {
  CampaignReport report = new_report(cfg, data);
  const auto& s = cfg.incremental;
  const Dataset train = attacks_only(data.train);
  const Dataset test = attacks_only(data.test);
  const UpdateConfig base = update_config_from_json(s.update);
  const auto replicates = static_cast<std::size_t>(cfg.replicates);

  struct Unit {
    std::size_t replicate;
    std::vector<ClassLabel> order;
    std::uint64_t seed;
    TrainingLogic logic;
  };
  std::vector<Unit> units;
  std::vector<std::vector<ClassLabel>> orders;
  for (std::size_t r = 0; r < replicates; ++r) {
    std::vector<ClassLabel> order(attack_classes().begin(), attack_classes().end());
    Rng rng(derive_seed(cfg.seed_base, 400 + r));
    std::shuffle(order.begin(), order.end(), rng);
    orders.push_back(std::move(order));
  }
  for (auto logic : s.logics) {
    for (std::size_t r = 0; r < replicates; ++r) {
      units.push_back({r, orders[r], derive_seed(cfg.seed_base, 500 + r), logic});
    }
  }
  std::vector<std::vector<RunRecord>> results(units.size());
  parallel_for(units.size(), cfg.threads, [&](std::size_t u) {
    const Unit& unit = units[u];
    UpdateConfig uc = base;
    uc.training_logic = unit.logic;
    uc.seed = unit.seed;
    const IncrementalRun run = run_multi_step(train, test, unit.order, s.schedule, uc);
    for (const auto& step : run.steps) {
      const IterationReport& last = step.rounds.back();
      RunRecord rec;
      rec.group = step.label + "/" + std::string(to_string(unit.logic));
      rec.descriptor = {{"replicate", unit.replicate},
                        {"class_order", label_names(unit.order)},
                        {"logic", std::string(to_string(unit.logic))},
                        {"step", step.step},
                        {"step_label", step.label},
                        {"seed", unit.seed}};
      rec.metrics = last.metrics;
      rec.extra = {{"final_report", to_json(last, false)},
                   {"base_training", step.base_training_ids.size()},
                   {"final_training", step.final_training_ids.size()},
                   {"curve", step_curve(step)}};
      results[u].push_back(std::move(rec));
    }
  });
  for (auto& r : results) {
    for (auto& rec : r) report.runs.push_back(std::move(rec));
  }
  finish_report(report);

  std::vector<std::vector<std::string>> rows;
  json curves = json::array();
  for (std::size_t i = 0; i + 1 < s.schedule.size(); ++i) {
    const std::string label = step_label(s.schedule[i].first, s.schedule[i].second);
    std::vector<std::pair<std::string, const std::map<std::string, AggregateValue>*>> cells;
    for (auto logic : s.logics) {
      cells.emplace_back(logic_name(logic),
                         &report.aggregates[label + "/" + std::string(to_string(logic))]);
    }
    auto row_of = [&](const std::string& name, const std::map<std::string, AggregateValue>& agg) {
      return std::vector<std::string>{label, name, mean_cell(agg, "macro_f1", 4),
                                      mean_cell(agg, "balanced_accuracy", 4),
                                      mean_cell(agg, "accuracy", 4)};
    };
    bool identical = cells.size() > 1;
    for (const auto& c : cells) {
      identical = identical && row_of("", *c.second) == row_of("", *cells.front().second);
    }
    if (identical) {
      rows.push_back(row_of("Both", *cells.front().second));
    } else {
      for (const auto& [name, agg] : cells) rows.push_back(row_of(name, *agg));
    }
    for (const auto& [name, agg] : cells) {
      const auto it = agg->find("macro_f1");
      curves.push_back({{"step", label},
                        {"logic", name},
                        {"macro_f1", it == agg->end() ? json(nullptr) : json(it->second.mean)}});
    }
  }
  report.figures["step_curves"] = std::move(curves);
  report.tables["multi_step.csv"] =
      to_csv({"Step", "Strategy", "Macro-F1", "Balanced Acc", "Accuracy"}, rows);
  return report;
}

}  // namespace

CampaignReport run_incremental(const ExperimentConfig& cfg) {
  cfg.validate();
  require_full_taxonomy(cfg);
  const PreparedData data = prepare_data(cfg.data, cfg.split);
  if (cfg.campaign == Campaign::kIncrementalOneStep) return run_one_step_campaign(cfg, data);
  if (cfg.campaign == Campaign::kIncrementalMultiStep) return run_multi_step_campaign(cfg, data);
  throw InvalidArgument("run_incremental needs an incremental campaign");
}

CampaignReport run_campaign(const ExperimentConfig& cfg) {
  switch (cfg.campaign) {
    case Campaign::kLayer1: return run_layer1(cfg);
    case Campaign::kLayer2Openset: return run_layer2(cfg);
    case Campaign::kAcm: return run_acm(cfg);
    case Campaign::kIncrementalOneStep:
    case Campaign::kIncrementalMultiStep: return run_incremental(cfg);
  }
  throw InvalidArgument("unknown campaign");
}

// ---------------------------------------------------------------------------
// Output

json to_json(const CampaignReport& report) {
  json runs = json::array();
  for (const auto& r : report.runs) {
    runs.push_back({{"index", r.index},
                    {"group", r.group},
                    {"descriptor", r.descriptor},
                    {"metrics", to_json(r.metrics)},
                    {"extra", r.extra}});
  }
  json aggregates = json::object();
  for (const auto& [group, metrics] : report.aggregates) {
    json g = json::object();
    for (const auto& [name, value] : metrics) g[name] = to_json(value);
    aggregates[group] = std::move(g);
  }
  return {{"format", "mi2das.campaign_report"},
          {"version", 1},
          {"campaign", report.campaign},
          {"provenance",
           {{"dataset_hash", report.dataset_hash},
            {"code_version", report.code_version},
            {"config_hash", report.config_hash}}},
          {"config", report.config},
          {"runs", std::move(runs)},
          {"aggregates", std::move(aggregates)},
          {"tables", report.tables},
          {"figures", report.figures}};
}

void write_report(const CampaignReport& report, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "tables");
  auto write = [](const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw DataError("cannot write " + tmp.string());
      out << text;
      if (!out) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
  };
  const json j = to_json(report);
  write(dir / "report.json", j.dump(2) + "\n");
  std::string lines;
  for (const auto& r : j.at("runs")) lines += r.dump() + "\n";
  write(dir / "runs.jsonl", lines);
  write(dir / "figures.json", report.figures.dump(2) + "\n");
  for (const auto& [name, csv] : report.tables) write(dir / "tables" / name, csv);
}

}  // namespace mi2das

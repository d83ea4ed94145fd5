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

#include "mi2das/cli.h"

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <pthread.h>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mi2das/classifiers.h"
#include "mi2das/dataset.h"
#include "mi2das/detectors.h"
#include "mi2das/errors.h"
#include "mi2das/experiments.h"
#include "mi2das/metrics.h"
#include "mi2das/pooling.h"
#include "mi2das/service.h"

namespace mi2das {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string profile = "desk";
  std::string out;
  bool json_output = false;
  std::string dataset_dir;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json parse_json_arg(const std::string& text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string(what) + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string dataset_dir(const Globals& g) {
  if (!g.dataset_dir.empty()) return g.dataset_dir;
  if (const char* env = std::getenv("MI2DAS_DATA_DIR")) return env;
  return {};
}

std::vector<ClassLabel> parse_label_list(const std::string& text) {
  std::vector<ClassLabel> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto label = parse_ground_truth(item);
    if (!label) throw InvalidArgument("unknown class '" + item + "'");
    out.push_back(*label);
  }
  return out;
}

// Prints a summary either as JSON or as "key: value" lines.
void emit(std::ostream& out, const Globals& g, const json& summary) {
  if (g.json_output) {
    out << summary.dump() << '\n';
    return;
  }
  for (const auto& [k, v] : summary.items()) {
    out << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
  }
}

json class_count_json(const Dataset& ds) {
  json j = json::object();
  for (const auto& [label, n] : ds.class_counts()) j[std::string(to_string(label))] = n;
  return j;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const Globals& g, bool synthetic, double train_fraction, std::ostream& out) {
  if (g.out.empty()) throw InvalidArgument("ingest needs --out");
  const fs::path dir = g.out;
  fs::create_directories(dir);
  Dataset train, test;
  json summary;
  if (synthetic) {
    SyntheticConfig sc = desk_profile(g.seed.value_or(7));
    const Dataset full = generate_synthetic(sc);
    TrainTest tt = make_split(full, {SplitMode::kRandomStratified, train_fraction, g.seed.value_or(0)});
    train = std::move(tt.train);
    test = std::move(tt.test);
    summary["source"] = "synthetic";
    summary["fingerprint"] = dataset_fingerprint(full);
  } else {
    const std::string ddir = dataset_dir(g);
    if (ddir.empty()) {
      throw InvalidArgument("ingest needs --dataset-dir, MI2DAS_DATA_DIR or --synthetic");
    }
    const ColumnSchema schema =
        g.config.empty() ? edge_iiotset_schema() : load_schema(g.config);
    if (!fs::is_directory(ddir)) throw DataError("dataset directory " + ddir + " not found");
    const RawTable raw = load_official_split(ddir, schema);
    json rejections = json::array();
    for (const auto& r : raw.rejections) rejections.push_back({{"line", r.line}, {"reason", r.reason}});
    const Dataset full = encode_official(raw, schema);
    TrainTest tt = make_split(full, {SplitMode::kOfficial, 0.8, 0});
    train = std::move(tt.train);
    test = std::move(tt.test);
    summary["source"] = "official";
    summary["fingerprint"] = dataset_fingerprint(full);
    summary["rejections"] = rejections;
    summary["count_mismatches"] = check_official_counts(train, test);
  }
  write_jsonl(train, dir / "train.jsonl");
  write_jsonl(test, dir / "test.jsonl");
  summary["dim"] = train.dim();
  summary["train"] = train.size();
  summary["test"] = test.size();
  summary["train_counts"] = class_count_json(train);
  summary["test_counts"] = class_count_json(test);
  write_text(dir / "manifest.json", summary.dump(2) + "\n");
  emit(out, g, {{"out", dir.string()},
                {"train", train.size()},
                {"test", test.size()},
                {"dim", train.dim()},
                {"fingerprint", summary["fingerprint"]}});
  return kExitOk;
}

int cmd_preprocess(const Globals& g, const std::string& in, const std::string& fit_on,
                   std::ostream& out) {
  if (in.empty() || g.out.empty()) throw InvalidArgument("preprocess needs --in and --out");
  const Dataset ds = read_jsonl(in);
  const Dataset fit = fit_on.empty() ? ds : read_jsonl(fit_on);
  const Scaler scaler = fit_scaler(fit);
  const Dataset scaled = standardize(ds, scaler);
  write_jsonl(scaled, g.out);
  emit(out, g, {{"out", g.out}, {"records", scaled.size()}, {"dim", scaled.dim()}});
  return kExitOk;
}

int cmd_train_detector(const Globals& g, const std::string& in, const std::string& role,
                       const std::string& hyper_text, double th_per, const std::string& mode,
                       const std::string& known, std::ostream& out) {
  if (in.empty() || g.out.empty()) throw InvalidArgument("train-detector needs --in and --out");
  json hj = parse_json_arg(hyper_text, "--hyper");
  if (g.seed && (hj.value("kind", "") == "gmm" || hj.value("kind", "") == "iforest")) {
    hj["seed"] = *g.seed;
  }
  const DetectorHyper hyper = detector_hyper_from_json(hj);
  const Dataset ds = read_jsonl(in);
  std::optional<DetectorModel> model;
  if (role == "layer1") {
    Layer1TrainConfig cfg;
    if (mode == "novelty") {
      cfg.mode = Layer1Mode::kNovelty;
    } else if (mode == "outlier") {
      cfg.mode = Layer1Mode::kOutlier;
    } else {
      throw InvalidArgument("--mode must be novelty or outlier");
    }
    cfg.detector = hyper;
    cfg.th_per = th_per;
    cfg.seed = g.seed.value_or(0);
    model = train_layer1(ds, cfg);
  } else if (role == "layer2") {
    if (known.empty()) throw InvalidArgument("layer2 detectors need --known");
    model = train_layer2(ds, PartitionSpec(parse_label_list(known)), hyper, th_per);
  } else {
    throw InvalidArgument("--role must be layer1 or layer2");
  }
  write_text(g.out, to_json(*model).dump() + "\n");
  emit(out, g, {{"out", g.out},
                {"kind", std::string(to_string(model->kind()))},
                {"threshold", *model->threshold()},
                {"fingerprint", model->fingerprint()}});
  return kExitOk;
}

int cmd_train_classifier(const Globals& g, const std::string& in, const std::string& hyper_text,
                         const std::string& known, std::ostream& out) {
  if (in.empty() || g.out.empty()) throw InvalidArgument("train-classifier needs --in and --out");
  ClassifierOptions opts;
  opts.hyper = classifier_hyper_from_json(parse_json_arg(hyper_text, "--hyper"));
  opts.seed = g.seed.value_or(0);
  Dataset ds = read_jsonl(in);
  std::optional<std::vector<ClassLabel>> known_list;
  if (!known.empty()) {
    known_list = parse_label_list(known);
    ds = ds.filter([&](const FlowRecord& r) {
      return r.label && std::find(known_list->begin(), known_list->end(), *r.label) != known_list->end();
    });
  } else {
    ds = ds.filter([](const FlowRecord& r) { return r.label && is_attack(*r.label); });
  }
  const ClassifierModel clf = train_classifier(ds, opts, known_list);
  write_text(g.out, to_json(clf).dump() + "\n");
  emit(out, g, {{"out", g.out},
                {"kind", std::string(to_string(clf.kind()))},
                {"classes", label_names(clf.classes())},
                {"records", ds.size()}});
  return kExitOk;
}

int cmd_route(const Globals& g, const std::string& in, const std::string& l1_path,
              const std::string& l2_path, const std::string& clf_path, std::ostream& out) {
  if (in.empty() || l1_path.empty() || l2_path.empty() || g.out.empty()) {
    throw InvalidArgument("route needs --in, --layer1, --layer2 and --out");
  }
  const DetectorModel l1 = detector_from_json(read_json_file(l1_path));
  const DetectorModel l2 = detector_from_json(read_json_file(l2_path));
  std::optional<ClassifierModel> clf;
  if (!clf_path.empty()) clf = classifier_from_json(read_json_file(clf_path));
  const Dataset ds = read_jsonl(in);
  std::ostringstream lines;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : ds.records) {
    const PoolAssignment a = route(r, l1, l2);
    json rec = audit_record(r.id, a);
    if (clf && a.pool == Pool::kKnownAttack) {
      rec["predicted"] = std::string(to_string(clf->predict(r.features)));
    }
    ++counts[std::string(to_string(a.pool))];
    lines << rec.dump() << '\n';
  }
  write_text(g.out, lines.str());
  emit(out, g, {{"out", g.out}, {"records", ds.size()}, {"pools", counts}});
  return kExitOk;
}

int cmd_experiment(const Globals& g, const std::string& campaign, int threads, std::ostream& out) {
  ExperimentConfig cfg;
  if (!g.config.empty()) {
    cfg = load_experiment_config(g.config);
  } else if (!campaign.empty()) {
    const auto c = parse_campaign(campaign);
    if (!c) throw InvalidArgument("unknown campaign '" + campaign + "'");
    cfg = profile_config(*c, g.profile, dataset_dir(g));
  } else {
    throw InvalidArgument("experiment needs --config or --campaign");
  }
  if (g.seed) cfg.seed_base = *g.seed;
  if (threads > 0) cfg.threads = threads;
  if (!g.out.empty()) cfg.output_dir = g.out;
  if (cfg.output_dir.empty()) throw InvalidArgument("experiment needs --out or output_dir");
  if (cfg.data.kind == DataSource::Kind::kOfficial && cfg.data.dir.empty()) {
    cfg.data.dir = dataset_dir(g);
    if (cfg.data.dir.empty()) {
      throw InvalidArgument("official data needs --dataset-dir or MI2DAS_DATA_DIR");
    }
  }
  cfg.validate();
  const CampaignReport report = run_campaign(cfg);
  write_report(report, cfg.output_dir);
  json tables = json::array();
  for (const auto& [name, csv] : report.tables) tables.push_back(name);
  emit(out, g, {{"campaign", report.campaign},
                {"runs", report.runs.size()},
                {"out", cfg.output_dir.string()},
                {"config_hash", report.config_hash},
                {"dataset_hash", report.dataset_hash},
                {"tables", tables}});
  return kExitOk;
}

int cmd_report(const Globals& g, const std::string& in, const std::string& format,
               const std::string& table, std::ostream& out) {
  if (in.empty()) throw InvalidArgument("report needs --in");
  const json report = read_json_file(in);
  if (report.value("format", std::string()) != "mi2das.campaign_report") {
    throw DataError(in + ": not a campaign report");
  }
  std::string text;
  if (format == "csv") {
    const json& tables = report.at("tables");
    if (tables.empty()) throw DataError(in + ": report holds no tables");
    std::string name = table;
    if (name.empty()) {
      // The headline table: the first one, skipping the full layer-1 listing.
      for (const auto& [k, v] : tables.items()) {
        if (k != "layer1_all.csv") {
          name = k;
          break;
        }
      }
    }
    if (!tables.contains(name)) throw InvalidArgument("no table '" + name + "' in report");
    text = tables.at(name).get<std::string>();
  } else if (format == "json") {
    text = json{{"campaign", report.at("campaign")},
                {"provenance", report.at("provenance")},
                {"aggregates", report.at("aggregates")}}
               .dump(2) +
           "\n";
  } else if (format == "text") {
    std::ostringstream s;
    s << "campaign: " << report.at("campaign").get<std::string>() << '\n'
      << "runs: " << report.at("runs").size() << '\n';
    for (const auto& [group, metrics] : report.at("aggregates").items()) {
      s << group << '\n';
      for (const auto& [name, v] : metrics.items()) {
        if (v.at("n").get<std::size_t>() == 0) continue;
        AggregateValue a;
        a.mean = v.at("mean").get<double>();
        a.stddev = v.at("stddev").get<double>();
        s << "  " << name << ": " << format_mean_std(a, 4) << " (n=" << v.at("n") << ")\n";
      }
    }
    text = s.str();
  } else {
    throw InvalidArgument("--format must be csv, json or text");
  }
  if (g.out.empty()) {
    out << text;
  } else {
    write_text(g.out, text);
  }
  return kExitOk;
}

int cmd_serve(const Globals& g, const std::string& host, int port, const std::string& state_dir,
              std::ostream& out) {
  ServiceConfig cfg;
  if (!g.config.empty()) {
    const json j = read_json_file(g.config);
    for (const auto& [key, value] : j.items()) {
      if (key == "host") {
        cfg.host = value.get<std::string>();
      } else if (key == "port") {
        cfg.port = value.get<int>();
      } else if (key == "state_dir") {
        cfg.state_dir = value.get<std::string>();
      } else if (key == "pool_capacity") {
        cfg.pool_capacity = value.get<std::size_t>();
      } else if (key == "cors_origin") {
        cfg.cors_origin = value.get<std::string>();
      } else if (key == "max_query_limit") {
        cfg.max_query_limit = value.get<std::size_t>();
      } else if (key == "al_strategy") {
        const auto s = parse_al_strategy(value.get<std::string>());
        if (!s) throw InvalidArgument("unknown al_strategy");
        cfg.al_strategy = *s;
      } else if (key == "classifier") {
        cfg.classifier.hyper = classifier_hyper_from_json(value);
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else {
        throw InvalidArgument("unknown service config key '" + key + "'");
      }
    }
  }
  if (!host.empty()) cfg.host = host;
  if (port >= 0) cfg.port = port;
  if (!state_dir.empty()) cfg.state_dir = state_dir;
  if (g.seed) cfg.seed = *g.seed;

  std::optional<BootstrapData> boot;
  const bool has_state = !cfg.state_dir.empty() && fs::exists(cfg.state_dir / "snapshots") &&
                         !fs::is_empty(cfg.state_dir / "snapshots");
  if (!has_state) {
    if (g.profile != "desk") {
      throw InvalidArgument("serve bootstraps only from the desk profile; pass --state-dir "
                            "with existing snapshots otherwise");
    }
    boot = desk_bootstrap(g.seed.value_or(7));
  }

  // Block termination signals here; a watcher thread turns them into a
  // graceful stop.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Pipeline pipeline(cfg, std::move(boot));
  HttpService http(pipeline);
  const int bound = http.bind();
  emit(out, g, {{"listening", cfg.host + ":" + std::to_string(bound)},
                {"model_version", pipeline.snapshot()->version},
                {"state_dir", cfg.state_dir.string()}});
  out.flush();
  std::thread watcher([&http, set] {
    int sig = 0;
    sigwait(&set, &sig);
    http.stop();
  });
  http.listen();
  pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MI2DAS multi-layer intrusion detection", "mi2das"};
  app.require_subcommand(1);
  Globals g;
  auto add_globals = [&g](CLI::App* sub) {
    sub->add_option("--config", g.config, "JSON config file");
    sub->add_option("--seed", g.seed, "Seed for every random choice");
    sub->add_option("--profile", g.profile, "desk or full")
        ->check(CLI::IsMember({"desk", "full"}));
    sub->add_option("--out", g.out, "Output file or directory");
    sub->add_flag("--json", g.json_output, "Machine-readable output");
    sub->add_option("--dataset-dir", g.dataset_dir,
                    "Edge-IIoTset CSV directory (default: $MI2DAS_DATA_DIR)");
  };

  auto* ingest = app.add_subcommand("ingest", "Load and preprocess a dataset into JSON lines");
  bool synthetic = false;
  double train_fraction = 0.5;
  add_globals(ingest);
  ingest->add_flag("--synthetic", synthetic, "Generate the synthetic desk dataset");
  ingest->add_option("--train-fraction", train_fraction, "Synthetic stratified split");

  auto* preprocess_cmd = app.add_subcommand("preprocess", "Standardize a dataset dump");
  std::string in, fit_on;
  add_globals(preprocess_cmd);
  preprocess_cmd->add_option("--in", in, "Dataset JSON lines");
  preprocess_cmd->add_option("--fit-on", fit_on, "Dataset the scaler is fitted on");

  auto* train_det = app.add_subcommand("train-detector", "Fit and calibrate a detector");
  std::string role = "layer1", hyper = R"({"kind":"gmm","nc":2})", mode = "novelty", known;
  double th_per = 5.0;
  add_globals(train_det);
  train_det->add_option("--in", in, "Training dataset JSON lines");
  train_det->add_option("--role", role, "layer1 or layer2");
  train_det->add_option("--hyper", hyper, "Detector hyperparameters as JSON");
  train_det->add_option("--th-per", th_per, "Threshold percentile");
  train_det->add_option("--mode", mode, "novelty or outlier (layer1)");
  train_det->add_option("--known", known, "Comma-separated known classes (layer2)");

  auto* train_clf = app.add_subcommand("train-classifier", "Train an attack classifier");
  std::string clf_hyper = R"({"kind":"random_forest"})";
  add_globals(train_clf);
  train_clf->add_option("--in", in, "Training dataset JSON lines");
  train_clf->add_option("--hyper", clf_hyper, "Classifier hyperparameters as JSON");
  train_clf->add_option("--known", known, "Comma-separated classes to train on");

  auto* route_cmd = app.add_subcommand("route", "Route flows to pools");
  std::string l1, l2, clf;
  add_globals(route_cmd);
  route_cmd->add_option("--in", in, "Flows as dataset JSON lines");
  route_cmd->add_option("--layer1", l1, "Layer-1 detector JSON");
  route_cmd->add_option("--layer2", l2, "Layer-2 detector JSON");
  route_cmd->add_option("--classifier", clf, "Classifier JSON for known attacks");

  auto* experiment = app.add_subcommand("experiment", "Run an experiment campaign");
  std::string campaign;
  int threads = 0;
  add_globals(experiment);
  experiment->add_option("--campaign", campaign,
                         "layer1, layer2_openset, acm, incremental_one_step or "
                         "incremental_multi_step");
  experiment->add_option("--threads", threads, "Parallel runs");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string host, state_dir;
  int port = -1;
  add_globals(serve);
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks one)");
  serve->add_option("--state-dir", state_dir, "Persistent state directory");

  auto* report = app.add_subcommand("report", "Render a campaign report");
  std::string format = "csv", table;
  add_globals(report);
  report->add_option("--in", in, "report.json");
  report->add_option("--format", format, "csv, json or text");
  report->add_option("--table", table, "Table name for csv output");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(g, synthetic, train_fraction, out);
    if (preprocess_cmd->parsed()) return cmd_preprocess(g, in, fit_on, out);
    if (train_det->parsed()) {
      return cmd_train_detector(g, in, role, hyper, th_per, mode, known, out);
    }
    if (train_clf->parsed()) return cmd_train_classifier(g, in, clf_hyper, known, out);
    if (route_cmd->parsed()) return cmd_route(g, in, l1, l2, clf, out);
    if (experiment->parsed()) return cmd_experiment(g, campaign, threads, out);
    if (serve->parsed()) return cmd_serve(g, host, port, state_dir, out);
    if (report->parsed()) return cmd_report(g, in, format, table, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace mi2das

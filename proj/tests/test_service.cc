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

#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "mi2das/errors.h"
#include "mi2das/service.h"
#include "oracles/json_schema_check.h"
#include "support/test_support.h"

using namespace mi2das;
using nlohmann::json;

namespace {

const oracle::SchemaChecker& schema() {
  static const oracle::SchemaChecker checker(
      json::parse(testing::read_file(std::filesystem::path(MI2DAS_SOURCE_DIR) / "docs" / "api_schema.json")));
  return checker;
}

void expect_valid(const json& value, const std::string& def) {
  const auto errors = schema().check_def(value, def);
  for (const auto& e : errors) CAPTURE(e);
  CHECK_MESSAGE(errors.empty(), def << ": " << (errors.empty() ? "" : errors.front()));
}

ServiceConfig small_config(const std::filesystem::path& state_dir = {}) {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.state_dir = state_dir;
  ForestHyper rf;
  rf.n_trees = 20;
  rf.threads = 1;
  cfg.classifier.hyper = rf;
  cfg.seed = 5;
  return cfg;
}

// Pipeline plus HTTP front end on a free port.
struct Live {
  explicit Live(ServiceConfig cfg, bool bootstrap = true)
      : pipeline(std::move(cfg), bootstrap ? std::optional<BootstrapData>(desk_bootstrap(7)) : std::nullopt),
        http(pipeline),
        port(http.start()),
        client("127.0.0.1", port) {
    client.set_read_timeout(60, 0);
  }

  json get(const std::string& path, int expect = 200) {
    auto res = client.Get(path);
    REQUIRE(res);
    CHECK(res->status == expect);
    CHECK(res->get_header_value("Content-Type") == "application/json");
    return json::parse(res->body);
  }

  json post(const std::string& path, const json& body, int expect = 200) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, res->body);
    return json::parse(res->body);
  }

  Pipeline pipeline;
  HttpService http;
  int port;
  httplib::Client client;
};

// Ground truth for every desk-profile record id.
std::map<std::uint64_t, ClassLabel> desk_truth() {
  std::map<std::uint64_t, ClassLabel> out;
  for (const auto& r : generate_synthetic(desk_profile(7)).records) out[r.id] = *r.label;
  return out;
}

std::size_t conserved_total(const json& status) {
  return status.at("pools").at("normal").get<std::size_t>() +
         status.at("pools").at("known_attack").get<std::size_t>() +
         status.at("pools").at("unknown").get<std::size_t>() + status.at("queue").get<std::size_t>() +
         status.at("labeled").get<std::size_t>();
}

json flow_with(std::size_t dim, double value) { return {{"features", std::vector<double>(dim, value)}}; }

}  // namespace

TEST_CASE("read endpoints follow the api schema") {
  Live live(small_config());
  const json status = live.get("/status");
  expect_valid(status, "Status");
  CHECK(status.at("model_version") == 1);
  CHECK(status.at("classifier").at("classes").size() == 7);
  CHECK(status.at("pools").at("unknown").get<std::size_t>() > 0);

  expect_valid(live.get("/pools"), "Pools");
  expect_valid(live.get("/pools?include_ids=1&id=0"), "Pools");
  expect_valid(live.get("/metrics/history"), "MetricsHistory");
  CHECK(live.get("/metrics/history").at("reports").size() == 1);
  expect_valid(live.get("/models/1"), "ModelSnapshot");
  expect_valid(live.get("/models/99", 404), "Error");
  expect_valid(live.get("/nowhere", 404), "Error");
  expect_valid(live.get("/pools?id=-3", 400), "Error");
}

TEST_CASE("cors headers and preflight") {
  ServiceConfig cfg = small_config();
  cfg.cors_origin = "http://console.local";
  Live live(cfg);
  auto pre = live.client.Options("/classify");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Origin") == "http://console.local");
  auto res = live.client.Get("/status");
  REQUIRE(res);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://console.local");
}

TEST_CASE("classify single flows and batches") {
  Live live(small_config());
  const std::size_t dim = live.pipeline.snapshot()->layer1.dim();
  const json before = live.get("/status");

  const json one = live.post("/classify", flow_with(dim, 0.0));
  expect_valid(one, "ClassifyResponse");
  CHECK(one.at("model_version") == 1);

  json batch = {{"flows", json::array()}};
  for (int i = 0; i < 5; ++i) batch["flows"].push_back(flow_with(dim, 30.0 * i));
  const json many = live.post("/classify", batch);
  expect_valid(many, "ClassifyResponse");
  REQUIRE(many.at("results").size() == 5);
  for (const auto& r : many.at("results")) {
    if (r.at("pool") == "known_attack") {
      CHECK(r.contains("predicted"));
    } else {
      CHECK_FALSE(r.contains("predicted"));
    }
  }
  CHECK(conserved_total(live.get("/status")) == conserved_total(before) + 6);

  // A bad flow anywhere rejects the whole batch before any append.
  batch["flows"].push_back(flow_with(dim - 1, 0.0));
  expect_valid(live.post("/classify", batch, 400), "Error");
  expect_valid(live.post("/classify", {{"features", {1.0, "x"}}}, 400), "Error");
  auto raw = live.client.Post("/classify", "{not json", "application/json");
  REQUIRE(raw);
  CHECK(raw->status == 400);
  CHECK(conserved_total(live.get("/status")) == conserved_total(before) + 6);

  const std::uint64_t used = one.at("id").get<std::uint64_t>();
  json dup = flow_with(dim, 0.0);
  dup["id"] = used;
  expect_valid(live.post("/classify", dup, 400), "Error");
}

TEST_CASE("concurrent classify bursts lose nothing") {
  Live live(small_config());
  const std::size_t dim = live.pipeline.snapshot()->layer1.dim();
  const std::size_t start = conserved_total(live.get("/status"));
  std::atomic<int> failures{0};
  std::vector<std::set<std::uint64_t>> seen(2);
  auto burst = [&](int t) {
    httplib::Client c("127.0.0.1", live.port);
    c.set_read_timeout(60, 0);
    for (int b = 0; b < 10; ++b) {
      json body = {{"flows", json::array()}};
      for (int i = 0; i < 100; ++i) body["flows"].push_back(flow_with(dim, 0.01 * (t * 1000 + b * 100 + i)));
      auto res = c.Post("/classify", body.dump(), "application/json");
      if (!res || res->status != 200) {
        ++failures;
        continue;
      }
      const json got = json::parse(res->body);
      for (const auto& r : got.at("results")) seen[t].insert(r.at("id").get<std::uint64_t>());
    }
  };
  std::thread a(burst, 0), b(burst, 1);
  a.join();
  b.join();
  CHECK(failures == 0);
  CHECK(seen[0].size() == 1000);
  CHECK(seen[1].size() == 1000);
  for (auto id : seen[0]) CHECK(seen[1].count(id) == 0);
  CHECK(conserved_total(live.get("/status")) == start + 2000);
}

TEST_CASE("active learning queue, labels and retraining") {
  const auto truth = desk_truth();
  Live live(small_config());
  const json before = live.get("/status");
  const std::size_t total = conserved_total(before);

  expect_valid(live.get("/al/queries?limit=0", 400), "Error");
  expect_valid(live.get("/al/queries?limit=100000", 400), "Error");
  const json q = live.get("/al/queries?limit=20");
  expect_valid(q, "QueryBatch");
  REQUIRE(q.at("queries").size() == 20);
  CHECK(live.get("/al/queries?limit=20") == q);  // same pool and model: same batch
  for (std::size_t i = 1; i < 20; ++i) {
    CHECK(q["queries"][i]["uncertainty"].get<double>() <= q["queries"][i - 1]["uncertainty"].get<double>());
  }
  const json queued = live.get("/status");
  CHECK(queued.at("queue") == 20);
  CHECK(conserved_total(queued) == total);

  std::vector<std::uint64_t> ids;
  for (const auto& item : q.at("queries")) ids.push_back(item.at("id").get<std::uint64_t>());

  // Unknown is never assignable, and names outside the taxonomy are refused.
  const json bad = live.post("/al/labels", {{"labels", {{std::to_string(ids[0]), "Unknown"},
                                                        {std::to_string(ids[1]), "Teardrop"}}}});
  expect_valid(bad, "LabelAck");
  CHECK(bad.at("accepted") == 0);
  CHECK(bad.at("rejected").size() == 2);
  expect_valid(live.post("/al/labels", {{"analyst", "a"}}, 400), "Error");

  json labels = json::object();
  for (std::size_t i = 0; i < 18; ++i) labels[std::to_string(ids[i])] = std::string(to_string(truth.at(ids[i])));
  labels[std::to_string(ids[18])] = nullptr;  // abstain
  const json ack = live.post("/al/labels", {{"analyst", "tester"}, {"labels", labels}});
  expect_valid(ack, "LabelAck");
  CHECK(ack.at("accepted") == 18);
  CHECK(ack.at("abstained") == 1);
  CHECK(ack.at("queue") == 1);

  const json dup = live.post("/al/labels", {{"labels", {{std::to_string(ids[0]), "Normal"}}}});
  CHECK(dup.at("accepted") == 0);
  REQUIRE(dup.at("rejected").size() == 1);
  CHECK(dup["rejected"][0]["reason"] == "already labeled");

  const json after = live.get("/status");
  CHECK(conserved_total(after) == total);
  CHECK(after.at("labeled").get<std::size_t>() == before.at("labeled").get<std::size_t>() + 18);
  const json where = live.get("/pools?id=" + std::to_string(ids[18]));
  CHECK(where.at("member").at("location") == "unknown");

  const json re = live.post("/retrain", json::object());
  expect_valid(re, "RetrainResponse");
  CHECK(re.at("model_version") == 2);
  CHECK(live.get("/status").at("model_version") == 2);
  expect_valid(live.get("/models/2"), "ModelSnapshot");
  expect_valid(live.get("/metrics/history"), "MetricsHistory");
  CHECK(live.get("/metrics/history").at("reports").size() == 2);
  expect_valid(live.post("/retrain", json::object(), 409), "Error");
  expect_valid(live.post("/retrain", {{"epochs", 3}}, 400), "Error");
  CHECK(live.get("/status").at("model_version") == 2);
}

TEST_CASE("a failed retrain keeps the previous version serving") {
  const auto truth = desk_truth();
  ServiceConfig cfg = small_config();
  auto fail = std::make_shared<std::atomic<bool>>(true);
  cfg.retrain_hook = [fail] {
    if (*fail) throw std::runtime_error("injected");
  };
  Live live(cfg);
  const json q = live.get("/al/queries?limit=5");
  json labels = json::object();
  for (const auto& item : q.at("queries")) {
    const auto id = item.at("id").get<std::uint64_t>();
    labels[std::to_string(id)] = std::string(to_string(truth.at(id)));
  }
  live.post("/al/labels", {{"labels", labels}});

  const json err = live.post("/retrain", json::object(), 500);
  expect_valid(err, "Error");
  CHECK(live.get("/status").at("model_version") == 1);
  CHECK(live.get("/status").at("new_labels") == 5);
  live.get("/models/2", 404);

  *fail = false;
  CHECK(live.post("/retrain", json::object()).at("model_version") == 2);
}

TEST_CASE("state survives a restart and the audit log is complete") {
  const auto truth = desk_truth();
  testing::TempDir dir("service");
  json status_before, pools_before;
  std::size_t answered = 0;
  {
    Live live(small_config(dir.path()));
    const std::size_t dim = live.pipeline.snapshot()->layer1.dim();
    live.post("/classify", flow_with(dim, 1.0));
    const json q = live.get("/al/queries?limit=10");
    json labels = json::object();
    for (const auto& item : q.at("queries")) {
      const auto id = item.at("id").get<std::uint64_t>();
      labels[std::to_string(id)] = std::string(to_string(truth.at(id)));
      ++answered;
    }
    live.post("/al/labels", {{"analyst", "ana"}, {"labels", labels}});
    live.post("/retrain", json::object());
    status_before = live.get("/status");
    pools_before = live.get("/pools?include_ids=1");
  }
  {
    Live live(small_config(dir.path()), false);
    CHECK(live.get("/status") == status_before);
    CHECK(live.get("/pools?include_ids=1") == pools_before);
    expect_valid(live.get("/models/2"), "ModelSnapshot");
    CHECK(live.get("/metrics/history").at("reports").size() == 2);
  }

  std::ifstream audit(dir / "audit.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(audit, line)) {
    const json e = json::parse(line);
    CHECK(e.at("analyst") == "ana");
    CHECK(e.contains("timestamp"));
    CHECK(truth.at(e.at("id").get<std::uint64_t>()) == *parse_label(e.at("label").get<std::string>()));
    ++lines;
  }
  CHECK(lines == answered);
}

TEST_CASE("restoring without snapshots needs bootstrap data") {
  testing::TempDir dir("empty");
  CHECK_THROWS(Pipeline(small_config(dir.path()), std::nullopt));
  ServiceConfig zero = small_config();
  zero.pool_capacity = 0;
  CHECK_THROWS_AS(Pipeline(zero, desk_bootstrap(7)), InvalidArgument);
}

TEST_CASE("bounded pools evict oldest first") {
  ServiceConfig cfg = small_config();
  cfg.pool_capacity = 50;
  Live live(cfg);
  const std::size_t dim = live.pipeline.snapshot()->layer1.dim();
  json body = {{"flows", json::array()}};
  for (int i = 0; i < 120; ++i) body["flows"].push_back(flow_with(dim, 500.0 + i));
  live.post("/classify", body);
  const json pools = live.get("/pools");
  CHECK(pools.at("unknown").at("size").get<std::size_t>() <= 50);
  CHECK(pools.at("unknown").at("evicted").get<std::size_t>() > 0);
}

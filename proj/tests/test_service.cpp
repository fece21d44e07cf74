#include <cstdlib>
#include <filesystem>
#include <thread>

#include "doctest.h"

#include <nlohmann/json.hpp>
#include <unistd.h>

#include "cftree/service.hpp"
#include "test_util.hpp"

// After Eigen: <resolv.h> defines a _res macro that Eigen uses as a name.
#include <httplib.h>

using namespace cftree;
using nlohmann::json;
using testutil::vec;

namespace {

// age >= 1, else hours >= 2, else gain >= 3 reaches "high"; sector never matters.
TreeModel ladder_tree() {
  const FeatureSchema schema({{"age", ContinuousKind{}},
                              {"hours", ContinuousKind{}},
                              {"gain", ContinuousKind{}},
                              {"sector", CategoricalKind{{"public", "private"}}}},
                             {"low", "high"});
  std::vector<TreeNode> nodes{testutil::decision(1, vec({1, 0, 0, 0, 0}), -1.0, 2, 3), testutil::leaf(3, 2),
                              testutil::decision(2, vec({0, 1, 0, 0, 0}), -2.0, 4, 5), testutil::leaf(5, 2),
                              testutil::decision(4, vec({0, 0, 1, 0, 0}), -3.0, 8, 9), testutil::leaf(8, 1),
                              testutil::leaf(9, 2)};
  return TreeModel(TreeKind::AxisAligned, 2, 1, nodes, schema);
}

const json kLadderSource = {{"age", 0}, {"hours", 0}, {"gain", 0}, {"sector", "public"}};

json strip_timing(json j) {
  if (j.is_object()) {
    j.erase("millis");
    for (auto& [k, v] : j.items()) v = strip_timing(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_timing(v);
  }
  return j;
}

// A live server on a free local port.
struct Live {
  Service service;
  HttpServer server;
  std::thread thread;
  int port = -1;

  explicit Live(ServiceConfig c = {}) : service(std::move(c)), server(service) {
    port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen(); });
  }
  ~Live() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

std::pair<int, json> post(httplib::Client& c, const std::string& path, const json& body) {
  auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  return {res->status, json::parse(res->body)};
}

std::pair<int, json> get(httplib::Client& c, const std::string& path) {
  auto res = c.Get(path);
  REQUIRE(res);
  return {res->status, json::parse(res->body)};
}

std::string upload(httplib::Client& c, const TreeModel& tree) {
  const auto [status, body] = post(c, "/trees", serialize_tree(tree));
  REQUIRE(status == 201);
  return body["id"];
}

}  // namespace

TEST_CASE("upload, describe, predict and explain over HTTP") {
  Live live;
  auto c = live.client();
  const auto id = upload(c, *testutil::figure_two_tree());

  const auto [hs, health] = get(c, "/health");
  CHECK(hs == 200);
  CHECK(health["trees"] == 1);

  const auto [ds, desc] = get(c, "/trees/" + id);
  REQUIRE(ds == 200);
  CHECK(desc["class_count"] == 2);
  REQUIRE(desc["leaves"].size() == 5);
  int gray = 0;
  for (const auto& l : desc["leaves"]) gray += l["label"] == 2 ? 1 : 0;
  CHECK(gray == 2);
  CHECK(desc["schema"]["features"].size() == 2);

  const auto [ps, pred] = post(c, "/trees/" + id + "/predict", {{"instance", {0.5, 0.5}}});
  CHECK(ps == 200);
  CHECK(pred["class"] == 2);
  CHECK(pred["leaf"] == 15);

  const auto [es, res] = post(c, "/trees/" + id + "/explain", {{"instance", {-1, 0}}, {"target", 2}});
  REQUIRE(es == 200);
  CHECK(res["status"] == "found");
  CHECK((res["leaf"] == 7 || res["leaf"] == 15));
  REQUIRE(res["ledger"].size() == 2);
  for (const auto& e : res["ledger"]) CHECK(e.contains("millis"));

  const auto [fs, frozen] =
      post(c, "/trees/" + id + "/explain", {{"instance", {-1, 0}}, {"target", 2}, {"constraints", {{"freeze", {"*"}}}}});
  CHECK(fs == 200);
  CHECK(frozen["status"] == "no_feasible_leaf");

  auto res2 = c.Options("/trees/" + id + "/explain");
  REQUIRE(res2);
  CHECK(res2->status == 204);
  CHECK(res2->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("three explain calls with growing freeze lists") {
  Live live;
  auto c = live.client();
  const auto id = upload(c, ladder_tree());
  const std::vector<std::vector<std::string>> freezes{{}, {"age"}, {"age", "hours"}};
  const std::vector<double> expected{1.0, 4.0, 9.0};
  std::vector<json> results;
  for (size_t i = 0; i < freezes.size(); ++i) {
    json body{{"instance", kLadderSource}, {"target", 2}, {"constraints", {{"freeze", freezes[i]}}}};
    const auto [s, r] = post(c, "/trees/" + id + "/explain", body);
    REQUIRE(s == 200);
    REQUIRE(r["status"] == "found");
    CHECK(r["objective"].get<double>() == doctest::Approx(expected[i]).epsilon(1e-9));
    results.push_back(r);
  }
  for (size_t i = 1; i < results.size(); ++i) {
    CHECK(results[i]["objective"].get<double>() >= results[i - 1]["objective"].get<double>() - 1e-9);
    CHECK(results[i]["x_star"] != results[i - 1]["x_star"]);
  }
  CHECK(results[1]["raw"]["age"] == 0.0);
  CHECK(results[2]["raw"]["hours"] == 0.0);
  CHECK(results[2]["raw"]["sector"] == "public");
}

TEST_CASE("replaying a request yields the same body modulo timing") {
  Live live;
  auto c = live.client();
  const auto tree = gen_random_oblique(3, 4, 3, 21);
  const auto id = upload(c, tree);
  const json body{{"instance", {0.2, -0.4, 0.1}}, {"target", {{"classes", {1, 2, 3}}}}, {"cost", "l1"}, {"diverse_k", 3}};
  const auto [s1, r1] = post(c, "/trees/" + id + "/explain", body);
  REQUIRE(s1 == 200);

  // Concurrent replays, beyond the query-slot limit.
  std::vector<json> replies(8);
  std::vector<std::thread> threads;
  for (size_t i = 0; i < replies.size(); ++i)
    threads.emplace_back([&, i] {
      auto cc = live.client();
      auto res = cc.Post("/trees/" + id + "/explain", body.dump(), "application/json");
      if (res && res->status == 200) replies[i] = json::parse(res->body);
    });
  for (auto& t : threads) t.join();
  for (const auto& r : replies) CHECK(strip_timing(r) == strip_timing(r1));
}

TEST_CASE("error statuses carry codes and fields") {
  Live live;
  auto c = live.client();
  const auto id = upload(c, ladder_tree());
  const auto ex = "/trees/" + id + "/explain";

  CHECK(get(c, "/trees/nope").first == 404);
  CHECK(post(c, "/trees/nope/explain", {{"instance", kLadderSource}, {"target", 2}}).first == 404);

  auto bad = c.Post(ex, "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["field"] == "body");

  auto [s1, b1] = post(c, ex, {{"instance", kLadderSource}});
  CHECK(s1 == 400);
  CHECK(b1["field"] == "target");

  json odd = kLadderSource;
  odd["sector"] = "military";
  auto [s2, b2] = post(c, ex, {{"instance", odd}, {"target", 2}});
  CHECK(s2 == 422);
  CHECK(b2["error"] == "UnknownCategory");
  CHECK(b2["field"] == "instance");

  auto [s3, b3] = post(c, ex, {{"instance", kLadderSource}, {"target", 2},
                               {"constraints", {{"freeze", {"age"}}, {"bounds", {{"age", {1, 2}}}}}}});
  CHECK(s3 == 422);
  CHECK(b3["error"] == "ContradictoryConstraints");

  auto [s4, b4] = post(c, ex, {{"instance", kLadderSource}, {"target", 2}, {"constraints", {{"freez", {"age"}}}}});
  CHECK(s4 == 400);
  CHECK(b4["field"] == "constraints");

  CHECK(post(c, ex, {{"instance", kLadderSource}, {"target", 9}}).first == 400);
  CHECK(post(c, "/trees", {{"nodes", 3}}).first == 400);
}

TEST_CASE("store evicts the least recently used idle tree, 409 when all are held") {
  ServiceConfig cfg;
  cfg.max_trees = 2;
  Service svc(cfg);
  const auto doc = serialize_tree(*testutil::figure_two_tree()).dump();
  const auto a = svc.handle("POST", "/trees", doc).body["id"].get<std::string>();
  const auto b = svc.handle("POST", "/trees", doc).body["id"].get<std::string>();
  CHECK(a != b);
  CHECK(svc.handle("GET", "/trees/" + a, "").status == 200);  // b is now older
  const auto c = svc.handle("POST", "/trees", doc).body["id"].get<std::string>();
  CHECK(svc.handle("GET", "/trees/" + b, "").status == 404);
  CHECK(svc.handle("GET", "/trees/" + a, "").status == 200);

  // Queries in flight hold their trees.
  const auto held_a = svc.store().get(a);
  const auto held_c = svc.store().get(c);
  const auto r = svc.handle("POST", "/trees", doc);
  CHECK(r.status == 409);
  CHECK(r.body["error"] == "CapacityExceeded");
}

TEST_CASE("a full query queue times out with 503") {
  ServiceConfig cfg;
  cfg.max_concurrent_queries = 0;
  cfg.queue_timeout = std::chrono::milliseconds(20);
  Service svc(cfg);
  const auto id = svc.handle("POST", "/trees", serialize_tree(ladder_tree()).dump()).body["id"].get<std::string>();
  const json body{{"instance", kLadderSource}, {"target", 2}};
  CHECK(svc.handle("POST", "/trees/" + id + "/explain", body.dump()).status == 503);
  CHECK(svc.handle("POST", "/trees/" + id + "/predict", body.dump()).status == 200);

  QuerySlots slots(1);
  CHECK(slots.acquire(std::chrono::milliseconds(1)));
  CHECK_FALSE(slots.acquire(std::chrono::milliseconds(1)));
  slots.release();
  CHECK(slots.acquire(std::chrono::milliseconds(1)));
}

TEST_CASE("search baseline and margin routes") {
  Service svc;
  const auto id = svc.handle("POST", "/trees", serialize_tree(*testutil::figure_two_tree()).dump())
                      .body["id"]
                      .get<std::string>();
  SyntheticDataset data;
  data.schema = FeatureSchema::continuous(2, 2);
  data.rows = {vec({-3, 0}), vec({0.5, 0.5}), vec({4, 4})};
  data.labels = {1, 2, 2};
  json body{{"instance", {-1, 0}}, {"target", 2}, {"candidates", dataset_to_json(data)}};
  auto r = svc.handle("POST", "/trees/" + id + "/search-baseline", body.dump());
  REQUIRE(r.status == 200);
  CHECK(r.body["candidate_index"] == 1);

  CHECK(svc.handle("POST", "/trees/" + id + "/datasets", json{{"name", "train"}, {"dataset", dataset_to_json(data)}}.dump())
            .status == 201);
  body.erase("candidates");
  body["candidate_set"] = "train";
  CHECK(svc.handle("POST", "/trees/" + id + "/search-baseline", body.dump()).body["candidate_index"] == 1);
  body["candidate_set"] = "other";
  CHECK(svc.handle("POST", "/trees/" + id + "/search-baseline", body.dump()).status == 400);

  const json margin{{"instance", {-1, 0}}, {"target", 2}, {"epsilon_schedule", {0.0, 0.1, 0.3}}};
  r = svc.handle("POST", "/trees/" + id + "/explain", margin.dump());
  REQUIRE(r.status == 200);
  REQUIRE(r.body["runs"].size() == 3);
  for (size_t i = 1; i < 3; ++i)
    CHECK(r.body["runs"][i]["result"]["objective"].get<double>() >=
          r.body["runs"][i - 1]["result"]["objective"].get<double>() - 1e-9);
  const json bad_margin{{"instance", {-1, 0}}, {"target", 2}, {"epsilon_schedule", {0.1}}};
  const auto rb = svc.handle("POST", "/trees/" + id + "/explain", bad_margin.dump());
  CHECK(rb.status == 400);
  CHECK(rb.body["field"] == "epsilon_schedule");
}

TEST_CASE("configuration from the environment and store snapshots") {
  const auto dir = std::filesystem::temp_directory_path() / ("cftree_store_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  ::setenv("CFTREE_PORT", "9191", 1);
  ::setenv("CFTREE_MAX_TREES", "5", 1);
  ::setenv("CFTREE_STORE_DIR", dir.c_str(), 1);
  const auto cfg = ServiceConfig::from_env();
  ::unsetenv("CFTREE_PORT");
  ::unsetenv("CFTREE_MAX_TREES");
  ::unsetenv("CFTREE_STORE_DIR");
  CHECK(cfg.port == 9191);
  CHECK(cfg.max_trees == 5);
  CHECK(cfg.store_dir == dir.string());
  CHECK(ServiceConfig{}.port == 8080);
  CHECK(ServiceConfig{}.max_trees == 64);

  std::string id;
  {
    Service svc(cfg);
    id = svc.handle("POST", "/trees", serialize_tree(ladder_tree()).dump()).body["id"].get<std::string>();
  }
  Service restored(cfg);
  const auto r = restored.handle("GET", "/trees/" + id, "");
  CHECK(r.status == 200);
  CHECK(r.body["class_names"] == json{"low", "high"});
  std::filesystem::remove_all(dir);
}

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cftree/engine.hpp"
#include "cftree/error.hpp"
#include "cftree/fixtures.hpp"
#include "cftree/tree_model.hpp"

namespace cftree {

struct ServiceConfig {
  int port = 8080;
  std::string host = "0.0.0.0";
  int max_trees = 64;
  int max_concurrent_queries = 4;
  std::chrono::milliseconds queue_timeout{30000};
  std::string store_dir;  // empty: memory only
  std::string cors_origin = "*";

  /// Defaults overridden by CFTREE_PORT, CFTREE_MAX_TREES, CFTREE_STORE_DIR.
  static ServiceConfig from_env();
};

/// HTTP status for a library error raised while handling a request.
int http_status(ErrorCode code);

/// Trees keyed by opaque ids, evicted least-recently-used when full.
/// Entries still referenced by an in-flight query are never evicted.
class SessionStore {
 public:
  struct Entry {
    std::shared_ptr<const TreeModel> tree;
    std::int64_t uploaded_at = 0;  // unix seconds
    std::uint64_t last_used = 0;
    std::map<std::string, std::shared_ptr<const CandidatePool>> datasets;
  };

  explicit SessionStore(int capacity);

  // Throws CapacityExceeded when every stored tree is in use.
  std::string insert(std::shared_ptr<const TreeModel> tree, std::optional<std::string> id = std::nullopt);
  std::optional<Entry> get(const std::string& id);
  bool erase(const std::string& id);
  void add_dataset(const std::string& id, const std::string& name, std::shared_ptr<const CandidatePool> pool);
  size_t size() const;
  int capacity() const { return capacity_; }

  struct CapacityExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
  };

 private:
  mutable std::mutex mu_;
  int capacity_;
  std::uint64_t clock_ = 0;
  std::uint64_t next_id_ = 0;
  std::uint64_t salt_ = 0;
  std::map<std::string, Entry> entries_;
};

/// Counting semaphore whose acquire gives up after a timeout.
class QuerySlots {
 public:
  explicit QuerySlots(int n) : free_(n) {}
  bool acquire(std::chrono::milliseconds timeout);
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int free_;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

/// The route table, independent of the transport.
class Service {
 public:
  explicit Service(ServiceConfig config = {});

  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);
  const ServiceConfig& config() const { return config_; }
  SessionStore& store() { return store_; }

 private:
  HttpResponse upload(const std::string& body);
  HttpResponse describe(const std::string& id);
  HttpResponse predict_route(const std::string& id, const nlohmann::json& body);
  HttpResponse explain_route(const std::string& id, const nlohmann::json& body);
  HttpResponse search_route(const std::string& id, const nlohmann::json& body);
  HttpResponse dataset_route(const std::string& id, const nlohmann::json& body);
  void snapshot(const std::string& id, const TreeModel& tree) const;
  void restore();

  ServiceConfig config_;
  SessionStore store_;
  QuerySlots slots_;
};

/// Serves a Service over HTTP with JSON bodies and CORS headers.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // port 0 picks a free port; returns the bound port or -1.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cftree

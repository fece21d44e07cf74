#include "cftree/service.hpp"

#include <httplib.h>

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace cftree {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

int env_int(const char* name, int fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    return fallback;
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string p;
  while (std::getline(ss, p, '/'))
    if (!p.empty()) parts.push_back(p);
  return parts;
}

HttpResponse error_response(int status, const std::string& code, const std::string& message,
                            const std::string& field = "") {
  json body{{"error", code}, {"message", message}};
  if (!field.empty()) body["field"] = field;
  return {status, body};
}

HttpResponse from_error(const Error& e) {
  return error_response(http_status(e.code()), std::string(error_code_name(e.code())), e.what(), e.field());
}

// Releases a query slot on scope exit.
struct SlotGuard {
  QuerySlots& slots;
  ~SlotGuard() { slots.release(); }
};

}  // namespace

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  c.port = env_int("CFTREE_PORT", c.port);
  c.max_trees = env_int("CFTREE_MAX_TREES", c.max_trees);
  if (const char* d = std::getenv("CFTREE_STORE_DIR")) c.store_dir = d;
  return c;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownCategory:
    case ErrorCode::OutOfRangeValue:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::NonIntegralBlock:
    case ErrorCode::ContradictoryConstraints:
    case ErrorCode::EmptyInterval:
    case ErrorCode::NoAdmissibleCategory:
      return 422;
    case ErrorCode::NumericalBreakdown:
    case ErrorCode::IterationLimit:
    case ErrorCode::NodeBudgetExceeded:
    case ErrorCode::NonSeparableCostOnSeparablePath:
    case ErrorCode::Infeasible:
      return 500;
    default:
      return 400;
  }
}

// SessionStore

SessionStore::SessionStore(int capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw Error(ErrorCode::InvalidArgument, "store capacity must be >= 1");
  salt_ = std::random_device{}();
}

std::string SessionStore::insert(std::shared_ptr<const TreeModel> tree, std::optional<std::string> id) {
  std::lock_guard lock(mu_);
  if (static_cast<int>(entries_.size()) >= capacity_) {
    // Evict the least recently used tree no query is holding.
    auto victim = entries_.end();
    for (auto it = entries_.begin(); it != entries_.end(); ++it)
      if (it->second.tree.use_count() == 1 && (victim == entries_.end() || it->second.last_used < victim->second.last_used))
        victim = it;
    if (victim == entries_.end()) throw CapacityExceeded("all " + std::to_string(capacity_) + " stored trees are in use");
    entries_.erase(victim);
  }
  if (!id) {
    std::ostringstream s;
    s << "t" << std::hex << (salt_ ^ (0x9e3779b97f4a7c15ULL * ++next_id_));
    id = s.str();
  }
  Entry e;
  e.tree = std::move(tree);
  e.uploaded_at = static_cast<std::int64_t>(std::time(nullptr));
  e.last_used = ++clock_;
  entries_[*id] = std::move(e);
  return *id;
}

std::optional<SessionStore::Entry> SessionStore::get(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  it->second.last_used = ++clock_;
  return it->second;
}

bool SessionStore::erase(const std::string& id) {
  std::lock_guard lock(mu_);
  return entries_.erase(id) > 0;
}

void SessionStore::add_dataset(const std::string& id, const std::string& name,
                               std::shared_ptr<const CandidatePool> pool) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(id);
  if (it != entries_.end()) it->second.datasets[name] = std::move(pool);
}

size_t SessionStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// QuerySlots

bool QuerySlots::acquire(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return free_ > 0; })) return false;
  --free_;
  return true;
}

void QuerySlots::release() {
  {
    std::lock_guard lock(mu_);
    ++free_;
  }
  cv_.notify_one();
}

// Service

Service::Service(ServiceConfig config)
    : config_(std::move(config)), store_(config_.max_trees), slots_(config_.max_concurrent_queries) {
  if (!config_.store_dir.empty()) restore();
}

void Service::snapshot(const std::string& id, const TreeModel& tree) const {
  if (config_.store_dir.empty()) return;
  fs::create_directories(config_.store_dir);
  std::ofstream(fs::path(config_.store_dir) / (id + ".json")) << serialize_tree(tree).dump();
}

void Service::restore() {
  if (!fs::is_directory(config_.store_dir)) return;
  for (const auto& f : fs::directory_iterator(config_.store_dir)) {
    if (f.path().extension() != ".json") continue;
    try {
      std::ifstream in(f.path());
      auto tree = std::make_shared<const TreeModel>(parse_tree(json::parse(in)));
      store_.insert(std::move(tree), f.path().stem().string());
    } catch (const std::exception&) {
      // unreadable snapshots are skipped
    }
  }
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  const auto parts = split_path(path);
  try {
    auto parsed = [&]() -> json {
      try {
        return body.empty() ? json::object() : json::parse(body);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedDocument, std::string("body is not JSON: ") + e.what()).with_field("body");
      }
    };
    if (parts.size() == 1 && parts[0] == "health" && method == "GET")
      return {200, {{"status", "ok"}, {"trees", store_.size()}, {"capacity", store_.capacity()}}};
    if (parts.empty() || parts[0] != "trees") return error_response(404, "NotFound", "no route for " + path);
    if (parts.size() == 1) {
      if (method == "POST") return upload(body);
      return error_response(405, "MethodNotAllowed", method + " " + path);
    }
    const auto& id = parts[1];
    if (parts.size() == 2) {
      if (method == "GET") return describe(id);
      if (method == "DELETE")
        return store_.erase(id) ? HttpResponse{200, {{"deleted", id}}}
                                : error_response(404, "UnknownTree", "no tree with id '" + id + "'");
      return error_response(405, "MethodNotAllowed", method + " " + path);
    }
    if (parts.size() == 3 && method == "POST") {
      if (parts[2] == "predict") return predict_route(id, parsed());
      if (parts[2] == "explain") return explain_route(id, parsed());
      if (parts[2] == "search-baseline") return search_route(id, parsed());
      if (parts[2] == "datasets") return dataset_route(id, parsed());
    }
    return error_response(404, "NotFound", "no route for " + method + " " + path);
  } catch (const Error& e) {
    return from_error(e);
  } catch (const SessionStore::CapacityExceeded& e) {
    return error_response(409, "CapacityExceeded", e.what());
  } catch (const json::exception& e) {
    return error_response(400, "MalformedDocument", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "InternalError", e.what());
  }
}

HttpResponse Service::upload(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    return error_response(400, "MalformedDocument", std::string("body is not JSON: ") + e.what(), "body");
  }
  auto tree = std::make_shared<const TreeModel>(parse_tree(doc));
  const auto id = store_.insert(tree);
  snapshot(id, *tree);
  return {201, {{"id", id}}};
}

HttpResponse Service::describe(const std::string& id) {
  const auto entry = store_.get(id);
  if (!entry) return error_response(404, "UnknownTree", "no tree with id '" + id + "'");
  const auto& tree = *entry->tree;
  const auto& names = tree.schema().class_names();
  json leaves = json::array();
  for (NodeId leaf : tree.leaves()) {
    const auto& n = tree.node(leaf);
    leaves.push_back({{"leaf", leaf},
                      {"label", n.label},
                      {"class_name", names.at(static_cast<size_t>(n.label - 1))},
                      {"depth", tree.path_to(leaf).size() - 1}});
  }
  json datasets = json::array();
  for (const auto& [name, pool] : entry->datasets) datasets.push_back({{"name", name}, {"rows", pool->instances.size()}});
  return {200,
          {{"id", id},
           {"kind", tree.kind() == TreeKind::Oblique ? "oblique" : "axis_aligned"},
           {"dim", tree.dim()},
           {"class_count", tree.class_count()},
           {"class_names", names},
           {"schema", schema_to_json(tree.schema())},
           {"leaves", leaves},
           {"datasets", datasets},
           {"uploaded_at", entry->uploaded_at}}};
}

HttpResponse Service::predict_route(const std::string& id, const json& body) {
  const auto entry = store_.get(id);
  if (!entry) return error_response(404, "UnknownTree", "no tree with id '" + id + "'");
  if (!body.is_object() || !body.contains("instance"))
    return error_response(400, "MalformedDocument", "field 'instance' is required", "instance");
  Vector x;
  try {
    x = instance_from_json(entry->tree->schema(), body["instance"]);
  } catch (const Error& e) {
    return from_error(e.with_field("instance"));
  }
  const NodeId leaf = entry->tree->route(x);
  const ClassLabel y = entry->tree->node(leaf).label;
  return {200, {{"class", y}, {"class_name", entry->tree->schema().class_names().at(static_cast<size_t>(y - 1))}, {"leaf", leaf}}};
}

HttpResponse Service::explain_route(const std::string& id, const json& body) {
  const auto entry = store_.get(id);
  if (!entry) return error_response(404, "UnknownTree", "no tree with id '" + id + "'");
  Query q = query_from_json(entry->tree, body);
  std::optional<std::vector<double>> schedule;
  if (body.contains("epsilon_schedule")) {
    try {
      schedule = body["epsilon_schedule"].get<std::vector<double>>();
    } catch (const json::exception& e) {
      return error_response(400, "MalformedDocument", e.what(), "epsilon_schedule");
    }
  }
  if (!slots_.acquire(config_.queue_timeout))
    return error_response(503, "Busy", "query queue timed out");
  SlotGuard guard{slots_};
  const auto& schema = entry->tree->schema();
  if (schedule) {
    json runs = json::array();
    bool failed = false;
    try {
      for (const auto& [eps, r] : explain_margin(q, *schedule)) {
        runs.push_back({{"epsilon", eps}, {"result", result_to_json(r, schema)}});
        failed = failed || has_solver_error(r);
      }
    } catch (const Error& e) {
      return from_error(e.field().empty() && e.code() == ErrorCode::InvalidEpsilon ? e.with_field("epsilon_schedule") : e);
    }
    json doc{{"runs", runs}};
    if (failed) return {500, {{"error", "SolverFailure"}, {"message", "a leaf solve failed"}, {"result", doc}}};
    return {200, doc};
  }
  const auto r = explain(q);
  json doc = result_to_json(r, schema);
  if (has_solver_error(r))
    return {500, {{"error", "SolverFailure"}, {"message", "a leaf solve failed"}, {"ledger", doc["ledger"]}, {"result", doc}}};
  return {200, doc};
}

HttpResponse Service::search_route(const std::string& id, const json& body) {
  const auto entry = store_.get(id);
  if (!entry) return error_response(404, "UnknownTree", "no tree with id '" + id + "'");
  Query q = query_from_json(entry->tree, body);
  std::shared_ptr<const CandidatePool> pool;
  if (body.contains("candidates")) {
    try {
      const auto data = dataset_from_json(body["candidates"]);
      auto p = std::make_shared<CandidatePool>();
      p->instances = data.rows;
      p->labels = data.labels;
      pool = std::move(p);
    } catch (const Error& e) {
      return from_error(e.with_field("candidates"));
    }
  } else {
    const auto name = q.constraints.candidate_set ? *q.constraints.candidate_set : body.value("candidate_set", std::string());
    auto it = entry->datasets.find(name);
    if (name.empty() || it == entry->datasets.end())
      return error_response(400, "MalformedDocument",
                            name.empty() ? "give 'candidates' or the name of an uploaded candidate set"
                                         : "no candidate set named '" + name + "'",
                            "candidate_set");
    pool = it->second;
  }
  if (!slots_.acquire(config_.queue_timeout))
    return error_response(503, "Busy", "query queue timed out");
  SlotGuard guard{slots_};
  return {200, result_to_json(dataset_search(q, *pool), entry->tree->schema())};
}

HttpResponse Service::dataset_route(const std::string& id, const json& body) {
  const auto entry = store_.get(id);
  if (!entry) return error_response(404, "UnknownTree", "no tree with id '" + id + "'");
  if (!body.is_object() || !body.contains("name") || !body["name"].is_string())
    return error_response(400, "MalformedDocument", "field 'name' is required", "name");
  SyntheticDataset data;
  try {
    data = dataset_from_json(body.contains("dataset") ? body["dataset"] : body);
  } catch (const Error& e) {
    return from_error(e.with_field("dataset"));
  }
  for (const auto& r : data.rows)
    if (r.size() != entry->tree->dim())
      return error_response(422, "DimensionMismatch", "candidate rows do not match the tree", "dataset");
  auto pool = std::make_shared<CandidatePool>();
  pool->instances = std::move(data.rows);
  pool->labels = std::move(data.labels);
  const auto name = body["name"].get<std::string>();
  store_.add_dataset(id, name, std::move(pool));
  return {201, {{"name", name}}};
}

// HttpServer

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  const std::string origin = service.config().cors_origin;
  auto cors = [origin](httplib::Response& res) {
    if (origin.empty()) return;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  };
  auto route = [this, cors](const httplib::Request& req, httplib::Response& res) {
    const auto out = impl_->service.handle(req.method, req.path, req.body);
    res.status = out.status;
    cors(res);
    res.set_content(out.body.dump(), "application/json");
  };
  svr.Get(".*", route);
  svr.Post(".*", route);
  svr.Delete(".*", route);
  svr.Options(".*", [cors](const httplib::Request&, httplib::Response& res) {
    cors(res);
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace cftree

#include "cftree/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cftree/bench.hpp"
#include "cftree/engine.hpp"
#include "cftree/error.hpp"
#include "cftree/fixtures.hpp"
#include "cftree/service.hpp"

namespace cftree {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Flags {
  // query
  std::string tree;
  std::string instance;
  std::optional<int> target;
  std::string target_set;
  std::string class_costs;
  bool allow_same_class = false;
  std::string distance = "l2";
  std::string weights;
  std::string q_matrix;
  std::string combo = "1,1";
  std::string constraints;
  std::vector<std::string> freeze;
  std::vector<std::string> bounds;
  std::vector<std::string> monotone;
  std::vector<std::string> max_delta;
  double epsilon = 0.0;
  std::string epsilon_schedule;
  int diverse = 0;
  std::string candidate_set;
  std::string label_source = "tree_prediction";
  std::string dump_programs;
  // common
  int threads = 0;
  std::uint64_t seed = 1;
  std::string out;
  bool allow_infeasible = false;
  bool no_meta = false;
  // bench
  std::string data;
  int per_class = 20;
  std::string levels = "0,0.25,0.5";
  bool no_search = false;
  // gen-fixture
  std::string kind;
  int dim = 2;
  int depth = 3;
  int classes = 2;
  int rows = 200;
  double spread = 1.0;
  // certify
  std::vector<std::string> files;
  double tolerance = kKktTolerance;
  // oracle
  std::string mode = "grid";
  int grid_points = 0;
  // serve
  std::optional<int> port;
  std::string host = "0.0.0.0";
  std::string store_dir;
  std::optional<int> max_trees;
  int max_concurrent = 4;
  std::string cors_origin = "*";
};

Error input_error(const std::string& msg) { return Error(ErrorCode::InvalidArgument, msg); }

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, what + " is not valid JSON: " + e.what());
  }
}

json read_json(const std::string& path) { return parse_json(read_text(path), "'" + path + "'"); }

// Inline JSON when the value looks like a document, a file path otherwise.
json json_arg(const std::string& value, const std::string& what) {
  const auto first = value.find_first_not_of(" \t");
  if (first != std::string::npos && (value[first] == '[' || value[first] == '{'))
    return parse_json(value, what);
  return read_json(value);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    out.push_back(item);
  }
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  if (s == "inf" || s == "+inf") return kInf;
  if (s == "-inf") return -kInf;
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw input_error(what + ": '" + s + "' is not a number");
}

json number_list(const std::string& s, const std::string& what) {
  json out = json::array();
  for (const auto& item : split(s, ',')) {
    const double v = parse_number(item, what);
    if (std::isinf(v)) out.push_back(v > 0 ? "inf" : "-inf");
    else out.push_back(v);
  }
  return out;
}

std::tm utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return tm;
}

// Request documents built from flags; the same shapes the service accepts.

json target_doc(const Flags& f) {
  const int given = (f.target ? 1 : 0) + (!f.target_set.empty() ? 1 : 0) + (!f.class_costs.empty() ? 1 : 0);
  if (given != 1) throw input_error("give exactly one of --target, --target-set, --class-costs");
  json t;
  if (f.target) t = {{"class", *f.target}};
  else if (!f.target_set.empty()) {
    json ys = json::array();
    for (const auto& item : split(f.target_set, ',')) {
      try {
        ys.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw input_error("--target-set: '" + item + "' is not a class number");
      }
    }
    t = {{"classes", ys}};
  } else {
    t = {{"class_costs", number_list(f.class_costs, "--class-costs")}};
  }
  t["allow_same_class"] = f.allow_same_class;
  return t;
}

json weights_doc(const Flags& f) {
  if (f.weights.empty()) return nullptr;
  if (f.weights.front() == '@') return read_json(f.weights.substr(1));
  return number_list(f.weights, "--weights");
}

json q_matrix_doc(const Flags& f) {
  if (f.q_matrix.empty()) throw input_error("--distance quadratic needs --q-matrix");
  if (f.q_matrix.rfind("grid:", 0) == 0) {
    const auto dims = split(f.q_matrix.substr(5), 'x');
    if (dims.size() != 2) throw input_error("--q-matrix grid shorthand is grid:HxW");
    try {
      return {{"grid", {std::stoi(dims[0]), std::stoi(dims[1])}}};
    } catch (const std::exception&) {
      throw input_error("--q-matrix grid shorthand is grid:HxW");
    }
  }
  return json_arg(f.q_matrix, "--q-matrix");
}

json cost_doc(const Flags& f) {
  const auto& d = f.distance;
  if (d == "l1" || d == "l2") return {{"variant", d}, {"weights", weights_doc(f)}};
  if (d == "quadratic") return {{"variant", "quadratic"}, {"q_matrix", q_matrix_doc(f)}};
  if (d == "combo") {
    const auto coefs = number_list(f.combo, "--combo");
    const bool with_q = !f.q_matrix.empty();
    if (coefs.size() != (with_q ? 3u : 2u))
      throw input_error(with_q ? "--combo needs three coefficients (l1, l2, quadratic)"
                               : "--combo needs two coefficients (l1, l2)");
    json terms = json::array({{{"coefficient", coefs[0]}, {"cost", {{"variant", "l1"}, {"weights", weights_doc(f)}}}},
                              {{"coefficient", coefs[1]}, {"cost", {{"variant", "l2"}, {"weights", weights_doc(f)}}}}});
    if (with_q) terms.push_back({{"coefficient", coefs[2]}, {"cost", {{"variant", "quadratic"}, {"q_matrix", q_matrix_doc(f)}}}});
    return {{"variant", "combination"}, {"terms", terms}};
  }
  if (fs::path(d).extension() == ".json") return read_json(d);
  throw input_error("--distance must be l1, l2, quadratic, combo or a cost document (.json)");
}

std::pair<std::string, std::string> split_name(const std::string& spec, const char* flag) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos || colon == 0) throw input_error(std::string(flag) + " expects name:value, got '" + spec + "'");
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

json constraints_doc(const Flags& f) {
  json c = f.constraints.empty() ? json::object() : json_arg(f.constraints, "--constraints");
  if (!c.is_object()) throw Error(ErrorCode::MalformedDocument, "--constraints must be an object");
  for (const auto& list : f.freeze)
    for (const auto& name : split(list, ','))
      if (!name.empty()) c["freeze"].push_back(name);
  for (const auto& b : f.bounds) {
    const auto [name, rest] = split_name(b, "--bounds");
    const auto parts = split(rest, ':');
    if (parts.size() != 2) throw input_error("--bounds expects name:lo:hi, got '" + b + "'");
    auto end = [&](const std::string& s, const char* dflt) -> json {
      const double v = parse_number(s.empty() ? dflt : s, "--bounds");
      if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
      return v;
    };
    c["bounds"][name] = {end(parts[0], "-inf"), end(parts[1], "inf")};
  }
  for (const auto& m : f.monotone) {
    const auto [name, dir] = split_name(m, "--monotone");
    c["monotone"][name] = dir;
  }
  for (const auto& m : f.max_delta) {
    const auto [name, v] = split_name(m, "--max-delta");
    c["max_delta"][name] = parse_number(v, "--max-delta");
  }
  return c;
}

std::shared_ptr<const TreeModel> load_tree(const Flags& f) {
  if (f.tree.empty()) throw input_error("--tree is required");
  return std::make_shared<const TreeModel>(parse_tree(read_json(f.tree)));
}

json instance_doc(const Flags& f) {
  if (f.instance.empty()) throw input_error("--instance is required");
  return json_arg(f.instance, "--instance");
}

json request_doc(const Flags& f) {
  json body{{"instance", instance_doc(f)},
            {"target", target_doc(f)},
            {"cost", cost_doc(f)},
            {"constraints", constraints_doc(f)},
            {"epsilon", f.epsilon},
            {"diverse_k", f.diverse},
            {"threads", f.threads},
            {"label_source", f.label_source}};
  return body;
}

Query build_query(const Flags& f, std::shared_ptr<const TreeModel> tree) {
  try {
    return query_from_json(std::move(tree), request_doc(f));
  } catch (const Error& e) {
    if (e.field().empty()) throw;
    throw Error(e.code(), std::string(e.what()) + " (--" + e.field() + ")");
  }
}

std::shared_ptr<const CandidatePool> load_pool(const std::string& path) {
  const auto data = dataset_from_json(read_json(path));
  auto pool = std::make_shared<CandidatePool>();
  pool->instances = data.rows;
  pool->labels = data.labels;
  return pool;
}

std::string class_name(const TreeModel& tree, ClassLabel y) {
  const auto& names = tree.schema().class_names();
  if (y >= 1 && y <= static_cast<int>(names.size())) return names[static_cast<size_t>(y - 1)];
  return std::to_string(y);
}

std::string format_value(const RawValue& v) {
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  std::ostringstream s;
  s << std::setprecision(6) << std::get<double>(v);
  return s.str();
}

// Feature-by-feature changes, "=" rows omitted.
std::string describe_changes(const TreeModel& tree, const Vector& source, const Vector& x) {
  std::ostringstream s;
  try {
    const auto a = decode(tree.schema(), source);
    const auto b = decode(tree.schema(), x);
    int changed = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
      const auto& [name, va] = a.values[i];
      const auto& vb = b.values[i].second;
      bool same = va == vb;
      if (!same && std::holds_alternative<double>(va) && std::holds_alternative<double>(vb))
        same = std::abs(std::get<double>(va) - std::get<double>(vb)) <= 1e-12;
      if (same) continue;
      ++changed;
      s << "  " << name << ": " << format_value(va) << " -> " << format_value(vb) << "\n";
    }
    if (changed == 0) s << "  (no feature changes)\n";
  } catch (const Error&) {
    for (Eigen::Index d = 0; d < x.size(); ++d)
      if (std::abs(x[d] - source[d]) > 1e-12) s << "  x[" << d << "]: " << source[d] << " -> " << x[d] << "\n";
  }
  return s.str();
}

class Runner {
 public:
  Runner(Flags& f, std::ostream& out, std::ostream& err) : f_(f), out_(out), err_(err) {}

  void set_command(std::string c) { command_ = std::move(c); }

  int predict() {
    const auto tree = load_tree(f_);
    const Vector x = instance_from_json(tree->schema(), instance_doc(f_));
    const NodeId leaf = tree->route(x);
    const ClassLabel y = tree->node(leaf).label;
    out_ << "class " << y << " (" << class_name(*tree, y) << "), leaf " << leaf << "\n";
    emit({{"class", y}, {"class_name", class_name(*tree, y)}, {"leaf", leaf}});
    return kExitOk;
  }

  int explain() {
    const auto tree = load_tree(f_);
    Query q = build_query(f_, tree);
    if (!f_.candidate_set.empty()) q.candidates = load_pool(f_.candidate_set);
    const auto r = cftree::explain(q);
    summarize(*tree, q, r);
    emit(result_to_json(r, tree->schema(), !f_.no_meta));
    if (!f_.dump_programs.empty()) dump_programs(r);
    return result_code(r);
  }

  int diverse() {
    const auto tree = load_tree(f_);
    const Query q = build_query(f_, tree);
    // 0 keeps every feasible leaf.
    const auto sols = explain_diverse(q, f_.diverse > 0 ? f_.diverse : static_cast<int>(tree->leaves().size()));
    json list = json::array();
    for (const auto& s : sols) list.push_back(leaf_solution_to_json(s, tree->schema(), !f_.no_meta));
    out_ << sols.size() << " feasible leaves\n";
    for (const auto& s : sols)
      out_ << "  leaf " << s.leaf << " class " << s.label << " (" << class_name(*tree, s.label)
           << ") objective " << s.objective << "\n";
    emit({{"source_class", predict_class(*tree, q.source)}, {"solutions", list}});
    if (sols.empty()) return f_.allow_infeasible ? kExitOk : kExitInfeasible;
    return kExitOk;
  }

  int margin() {
    const auto tree = load_tree(f_);
    const Query q = build_query(f_, tree);
    if (f_.epsilon_schedule.empty()) throw input_error("--epsilon-schedule is required");
    std::vector<double> schedule;
    for (const auto& item : split(f_.epsilon_schedule, ',')) schedule.push_back(parse_number(item, "--epsilon-schedule"));
    const auto runs = explain_margin(q, schedule);
    json list = json::array();
    bool any_found = false, failed = false;
    for (const auto& [eps, r] : runs) {
      out_ << "epsilon " << eps << ": ";
      if (r.found()) out_ << "objective " << r.objective << " leaf " << r.leaf << "\n";
      else out_ << "no feasible leaf\n";
      any_found = any_found || r.found();
      failed = failed || has_solver_error(r);
      list.push_back({{"epsilon", eps}, {"result", result_to_json(r, tree->schema(), !f_.no_meta)}});
    }
    emit({{"runs", list}});
    if (failed) return kExitSolver;
    if (!any_found) return f_.allow_infeasible ? kExitOk : kExitInfeasible;
    return kExitOk;
  }

  int search() {
    const auto tree = load_tree(f_);
    const Query q = build_query(f_, tree);
    if (f_.candidate_set.empty()) throw input_error("--candidate-set is required");
    const auto r = dataset_search(q, *load_pool(f_.candidate_set));
    summarize(*tree, q, r);
    emit(result_to_json(r, tree->schema(), !f_.no_meta));
    return result_code(r);
  }

  int bench() {
    const auto tree = load_tree(f_);
    if (f_.data.empty()) throw input_error("--data is required");
    const auto data = dataset_from_json(read_json(f_.data));
    BenchOptions o;
    o.per_class = f_.per_class;
    o.distance = f_.distance;
    o.include_search = !f_.no_search;
    o.seed = f_.seed;
    o.threads = f_.threads;
    o.constrained_fractions.clear();
    for (const auto& item : split(f_.levels, ',')) o.constrained_fractions.push_back(parse_number(item, "--levels"));
    const auto report = run_bench(tree, data, o);
    out_ << bench_table(report);
    emit(bench_to_json(report, !f_.no_meta));
    return kExitOk;
  }

  int gen_fixture() {
    json doc;
    std::ostringstream what;
    const auto& k = f_.kind;
    if (k == "oblique-tree") {
      doc = serialize_tree(gen_random_oblique(f_.dim, f_.depth, f_.classes, f_.seed));
      what << "oblique tree D=" << f_.dim << " depth=" << f_.depth << " K=" << f_.classes;
    } else if (k == "axis-tree") {
      const auto data = make_blobs(f_.dim, f_.classes, f_.per_class, f_.spread, f_.seed);
      doc = serialize_tree(train_axis_aligned(data, f_.depth));
      what << "axis-aligned tree trained on blobs D=" << f_.dim << " K=" << f_.classes << " depth<=" << f_.depth;
    } else if (k == "blobs") {
      doc = dataset_to_json(make_blobs(f_.dim, f_.classes, f_.per_class, f_.spread, f_.seed));
      what << "blobs D=" << f_.dim << " K=" << f_.classes << " " << f_.per_class << " per class";
    } else if (k == "census") {
      doc = dataset_to_json(make_census_like(f_.rows, f_.seed));
      what << "census-like dataset, " << f_.rows << " rows";
    } else if (k == "census-tree") {
      doc = serialize_tree(train_axis_aligned(make_census_like(f_.rows, f_.seed), f_.depth));
      what << "axis-aligned tree trained on census-like data, depth<=" << f_.depth;
    } else if (k == "rounding-infeasible" || k == "rounding-suboptimal") {
      const auto kind = k == "rounding-infeasible" ? RoundingPitfall::Infeasible : RoundingPitfall::Suboptimal;
      doc = rounding_fixture_to_json(find_rounding_fixture(kind, f_.seed));
      what << k << " fixture";
    } else {
      throw input_error("--kind must be oblique-tree, axis-tree, blobs, census, census-tree, "
                        "rounding-infeasible or rounding-suboptimal");
    }
    what << ", seed " << f_.seed;
    // Fixtures carry no meta block so they stay byte-stable.
    write_doc(doc);
    out_ << what.str() << (f_.out.empty() ? "" : " -> " + f_.out) << "\n";
    return kExitOk;
  }

  int certify() {
    if (f_.files.empty()) throw input_error("certify needs at least one {program, outcome} document");
    json reports = json::array();
    bool all = true;
    for (const auto& path : f_.files) {
      const auto doc = read_json(path);
      if (!doc.is_object() || !doc.contains("program") || !doc.contains("outcome"))
        throw Error(ErrorCode::MalformedDocument, "'" + path + "' must hold {program, outcome}");
      const auto prog = program_from_json(doc["program"]);
      const auto outcome = outcome_from_json(doc["outcome"]);
      const auto rep = check_kkt(prog, outcome, f_.tolerance);
      all = all && rep.passed;
      out_ << (rep.passed ? "PASS " : "FAIL ") << path << " residual " << rep.residual << "\n";
      reports.push_back({{"file", path},
                         {"passed", rep.passed},
                         {"residual", rep.residual},
                         {"stationarity", rep.stationarity},
                         {"primal", rep.primal},
                         {"dual", rep.dual},
                         {"complementarity", rep.complementarity}});
    }
    emit({{"tolerance", f_.tolerance}, {"reports", reports}});
    return all ? kExitOk : kExitInfeasible;
  }

  int oracle() {
    const auto tree = load_tree(f_);
    const Query q = build_query(f_, tree);
    const ClassLabel src = cftree::predict(*tree, q.source);
    const auto classes = q.target.resolve(tree->class_count(), src);
    OracleOptions o;
    o.grid_points = f_.grid_points;
    o.seed = f_.seed;
    OracleResult best;
    best.value = kInf;
    if (f_.mode == "grid") {
      std::vector<double> extra;
      for (int y = 1; y <= tree->class_count(); ++y) extra.push_back(q.target.extra_cost(y));
      const auto cs = compile(tree->schema(), q.source, q.constraints, nullptr, q.epsilon);
      best = tree_grid_oracle(*tree, classes, extra, cs, q.cost, q.source, o);
    } else if (f_.mode == "kkt" || f_.mode == "sampling") {
      const auto mode = f_.mode == "kkt" ? OracleMode::KktEnumeration : OracleMode::Sampling;
      for (NodeId leaf : target_leaves(*tree, classes)) {
        const auto region = leaf_region(*tree, leaf);
        const auto cs = compile(tree->schema(), q.source, q.constraints, &region, q.epsilon);
        auto r = oracle_minimum(cs, q.cost, q.source, mode, o);
        r.value += q.target.extra_cost(region.label);
        if (r.value < best.value) best = r;
      }
    } else {
      throw input_error("--mode must be grid, kkt or sampling");
    }
    out_ << f_.mode << " oracle: " << best.value << "\n";
    json doc{{"mode", f_.mode}, {"value", std::isfinite(best.value) ? json(best.value) : json("inf")}};
    if (best.point.size() > 0) doc["point"] = std::vector<double>(best.point.data(), best.point.data() + best.point.size());
    if (f_.mode == "grid") {
      doc["resolution"] = best.resolution;
      doc["value_resolution"] = best.value_resolution;
    }
    emit(doc);
    return kExitOk;
  }

  int serve() {
    ServiceConfig c = ServiceConfig::from_env();
    if (f_.port) c.port = *f_.port;
    if (f_.max_trees) c.max_trees = *f_.max_trees;
    if (!f_.store_dir.empty()) c.store_dir = f_.store_dir;
    c.host = f_.host;
    c.max_concurrent_queries = f_.max_concurrent;
    c.cors_origin = f_.cors_origin;
    Service service(c);
    HttpServer server(service);
    const int port = server.bind(c.host, c.port);
    if (port < 0) throw input_error("cannot bind " + c.host + ":" + std::to_string(c.port));
    out_ << "listening on " << c.host << ":" << port << std::endl;
    server.listen();
    return kExitOk;
  }

 private:
  static ClassLabel predict_class(const TreeModel& tree, const Vector& x) { return cftree::predict(tree, x); }

  int result_code(const CounterfactualResult& r) const {
    if (has_solver_error(r)) return kExitSolver;
    if (r.found() || f_.allow_infeasible) return kExitOk;
    return kExitInfeasible;
  }

  void summarize(const TreeModel& tree, const Query& q, const CounterfactualResult& r) {
    out_ << "source class " << r.source_class << " (" << class_name(tree, r.source_class) << ")\n";
    if (!r.found()) {
      int infeasible = 0;
      for (const auto& s : r.ledger) infeasible += s.feasible() ? 0 : 1;
      out_ << "no_feasible_leaf: " << infeasible << " of " << r.ledger.size() << " target leaves infeasible\n";
      return;
    }
    out_ << "found class " << r.label << " (" << class_name(tree, r.label) << ") in leaf " << r.leaf << ", objective "
         << r.objective << "\n";
    if (r.candidate_index) out_ << "candidate row " << *r.candidate_index << "\n";
    out_ << describe_changes(tree, q.source, r.x_star);
  }

  void dump_programs(const CounterfactualResult& r) {
    fs::create_directories(f_.dump_programs);
    for (const auto& s : r.ledger) {
      if (!s.program || !s.outcome) continue;
      std::ofstream(fs::path(f_.dump_programs) / ("leaf_" + std::to_string(s.leaf) + ".json"))
          << json{{"program", program_to_json(*s.program)}, {"outcome", outcome_to_json(*s.outcome)}}.dump(2) << "\n";
    }
  }

  void emit(json doc) {
    if (!f_.no_meta) {
      const auto tm = utc_now();
      std::ostringstream ts;
      ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
      doc["meta"] = {{"tool", "cftree"}, {"version", kVersion}, {"command", command_}, {"generated_at", ts.str()}};
    }
    write_doc(doc);
  }

  void write_doc(const json& doc) {
    if (f_.out.empty()) return;
    const auto text = doc.dump(2) + "\n";
    if (f_.out == "-") {
      out_ << text;
      return;
    }
    std::ofstream file(f_.out);
    if (!file) throw input_error("cannot write '" + f_.out + "'");
    file << text;
  }

  Flags& f_;
  std::ostream& out_;
  std::ostream& err_;
  std::string command_;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--out", f.out, "write the full document here ('-' for standard output)");
  sub->add_flag("--no-meta", f.no_meta, "omit timestamps and timings so output is byte-stable");
  sub->add_option("--threads", f.threads, "leaf-level parallelism cap (0: all cores)");
}

void add_query(CLI::App* sub, Flags& f) {
  add_common(sub, f);
  sub->add_option("--tree", f.tree, "tree document")->required();
  sub->add_option("--instance", f.instance, "instance document or inline JSON")->required();
  sub->add_option("--target", f.target, "target class (1..K)");
  sub->add_option("--target-set", f.target_set, "comma-separated target classes");
  sub->add_option("--class-costs", f.class_costs, "comma-separated L(y) per class, 'inf' excludes");
  sub->add_flag("--allow-same-class", f.allow_same_class, "let the source class be a target");
  sub->add_option("--distance", f.distance, "l1 | l2 | quadratic | combo | cost document (.json)");
  sub->add_option("--weights", f.weights, "comma-separated per-coordinate weights or @file");
  sub->add_option("--q-matrix", f.q_matrix, "matrix document, inline JSON, or grid:HxW");
  sub->add_option("--combo", f.combo, "coefficients of the l1, l2 (and quadratic) terms for combo");
  sub->add_option("--constraints", f.constraints, "constraint document or inline JSON");
  sub->add_option("--freeze", f.freeze, "features kept at the source value (comma-separated, '*' for all)");
  sub->add_option("--bounds", f.bounds, "name:lo:hi (either end may be empty)");
  sub->add_option("--monotone", f.monotone, "name:nondecreasing | name:nonincreasing");
  sub->add_option("--max-delta", f.max_delta, "name:value");
  sub->add_option("--epsilon", f.epsilon, "margin away from decision boundaries");
  sub->add_option("--label-source", f.label_source, "tree_prediction | ground_truth");
  sub->add_flag("--allow-infeasible", f.allow_infeasible, "exit 0 when no target leaf is feasible");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Exact counterfactual explanations for decision trees", "cftree"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto* predict = app.add_subcommand("predict", "class and leaf of an instance");
  add_common(predict, f);
  predict->add_option("--tree", f.tree, "tree document")->required();
  predict->add_option("--instance", f.instance, "instance document or inline JSON")->required();

  auto* explain = app.add_subcommand("explain", "closest instance classified as a target class");
  add_query(explain, f);
  explain->add_option("--diverse", f.diverse, "keep at most k alternatives (0: all)");
  explain->add_option("--candidate-set", f.candidate_set, "restrict to rows of this dataset");
  explain->add_option("--dump-programs", f.dump_programs, "write each leaf's program and outcome here");

  auto* diverse = app.add_subcommand("diverse", "per-leaf optima, best first");
  add_query(diverse, f);
  diverse->add_option("--diverse", f.diverse, "number of alternatives (0: all)");

  auto* margin = app.add_subcommand("margin", "sweep the boundary margin");
  add_query(margin, f);
  margin->add_option("--epsilon-schedule", f.epsilon_schedule, "comma-separated, starting at 0")->required();

  auto* search = app.add_subcommand("search-baseline", "nearest qualifying row of a dataset");
  add_query(search, f);
  search->add_option("--candidate-set", f.candidate_set, "dataset document")->required();

  auto* bench = app.add_subcommand("bench", "exact vs dataset search over sampled sources");
  add_common(bench, f);
  bench->add_option("--tree", f.tree, "tree document")->required();
  bench->add_option("--data", f.data, "dataset document")->required();
  bench->add_option("--per-class", f.per_class, "sources per class");
  bench->add_option("--distance", f.distance, "l1 | l2")->check(CLI::IsMember({"l1", "l2"}));
  bench->add_option("--levels", f.levels, "comma-separated fractions of features frozen");
  bench->add_flag("--no-search", f.no_search, "skip the dataset-search rows");
  bench->add_option("--seed", f.seed, "sampling seed");

  auto* gen = app.add_subcommand("gen-fixture", "generate trees, datasets and solver fixtures");
  gen->add_option("--kind", f.kind,
                  "oblique-tree | axis-tree | blobs | census | census-tree | rounding-infeasible | rounding-suboptimal")
      ->required();
  gen->add_option("--dim", f.dim, "feature count");
  gen->add_option("--depth", f.depth, "tree depth");
  gen->add_option("--classes", f.classes, "class count");
  gen->add_option("--per-class", f.per_class, "blob points per class");
  gen->add_option("--rows", f.rows, "census rows");
  gen->add_option("--spread", f.spread, "blob standard deviation");
  gen->add_option("--seed", f.seed, "generator seed");
  gen->add_option("--out", f.out, "output path ('-' for standard output)");

  auto* certify = app.add_subcommand("certify", "check KKT certificates of dumped programs");
  add_common(certify, f);
  certify->add_option("files", f.files, "{program, outcome} documents")->required();
  certify->add_option("--tolerance", f.tolerance, "relative residual tolerance");

  auto* oracle = app.add_subcommand("oracle", "brute-force minimum for cross-checks");
  oracle->group("");
  add_query(oracle, f);
  oracle->add_option("--mode", f.mode, "grid | kkt | sampling");
  oracle->add_option("--grid-points", f.grid_points, "lattice points per dimension (0: automatic)");
  oracle->add_option("--seed", f.seed, "sampling seed");

  auto* serve = app.add_subcommand("serve", "HTTP service");
  serve->add_option("--port", f.port, "port (default CFTREE_PORT or 8080)");
  serve->add_option("--host", f.host, "bind address");
  serve->add_option("--store-dir", f.store_dir, "snapshot uploaded trees here (default CFTREE_STORE_DIR)");
  serve->add_option("--max-trees", f.max_trees, "store capacity (default CFTREE_MAX_TREES or 64)");
  serve->add_option("--max-concurrent", f.max_concurrent, "simultaneous queries");
  serve->add_option("--cors-origin", f.cors_origin, "Access-Control-Allow-Origin value ('' disables)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  Runner runner(f, out, err);
  auto* sub = app.get_subcommands().front();
  runner.set_command(sub->get_name());
  try {
    const auto& name = sub->get_name();
    if (name == "predict") return runner.predict();
    if (name == "explain") return runner.explain();
    if (name == "diverse") return runner.diverse();
    if (name == "margin") return runner.margin();
    if (name == "search-baseline") return runner.search();
    if (name == "bench") return runner.bench();
    if (name == "gen-fixture") return runner.gen_fixture();
    if (name == "certify") return runner.certify();
    if (name == "oracle") return runner.oracle();
    if (name == "serve") return runner.serve();
    err << "unknown subcommand\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return http_status(e.code()) >= 500 ? kExitSolver : kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitSolver;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace cftree

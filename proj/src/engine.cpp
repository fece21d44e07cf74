#include "cftree/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include <nlohmann/json.hpp>

#include "cftree/convex.hpp"
#include "cftree/error.hpp"
#include "json_util.hpp"

namespace cftree {

using nlohmann::json;

namespace {

double millis_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

template <typename Fn>
void run_indexed(size_t n, int threads, Fn&& fn) {
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = static_cast<int>(std::min<size_t>(static_cast<size_t>(workers), n));
  if (n <= 4 || workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

bool better(const LeafSolution& a, const LeafSolution& b) {
  if (a.objective != b.objective) return a.objective < b.objective;
  return a.leaf < b.leaf;
}

struct Attempt {
  LeafStatus status = LeafStatus::Infeasible;
  Vector x;
  std::string solver;
  std::string detail;
  bool certified = false;
  double kkt_residual = 0.0;
  long nodes = 0;
  std::shared_ptr<const ProgramInstance> program;
  std::shared_ptr<const SolveOutcome> outcome;
};

LeafStatus from_solve_status(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return LeafStatus::Optimal;
    case SolveStatus::Infeasible: return LeafStatus::Infeasible;
    case SolveStatus::Unbounded: return LeafStatus::Unbounded;
  }
  return LeafStatus::Error;
}

Attempt attempt_leaf(const Query& q, const LeafRegion& region, double epsilon, const CompileOptions& copts,
                     const std::optional<Vector>& warm) {
  const auto& tree = *q.tree;
  const int D = tree.dim();
  const ConstraintSet cs = compile(tree.schema(), q.source, q.constraints, &region, epsilon, copts);
  Attempt a;

  const bool separable_path = tree.kind() == TreeKind::AxisAligned && cs.separable() && q.cost.separable() &&
                              !q.options.force_general;
  if (separable_path) {
    if (!q.cost.separable())
      throw Error(ErrorCode::NonSeparableCostOnSeparablePath, "dense cost reached the separable solver");
    std::vector<SeparableBlock> blocks;
    for (const auto& b : cs.one_hot_blocks) blocks.push_back({b.offset, b.size, {}});
    SolveOutcome out = solve_separable(q.source, cs.lower, cs.upper,
                                       SeparableCost{q.cost.l1_weights(), q.cost.l2_weights()}, blocks);
    a.solver = "separable";
    a.status = from_solve_status(out.status);
    a.detail = out.detail;
    a.x = out.x;
    return a;
  }

  const LoweredCost lowered = lower_to_program(q.cost, q.source);
  auto prog = std::make_shared<ProgramInstance>(build_program(cs, lowered));
  Vector start = Vector::Zero(lowered.num_vars());
  start.head(D) = warm ? *warm : q.source;
  for (size_t k = 0; k < lowered.aux_coord.size(); ++k) {
    const int d = lowered.aux_coord[k];
    start[D + static_cast<Eigen::Index>(k)] = std::abs(start[d] - q.source[d]);
  }
  prog->warm_start = start;

  std::shared_ptr<const ProgramInstance> certified_prog = prog;
  SolveOutcome out;
  if (cs.has_integrality()) {
    MixedResult mr = solve_mixed(*prog, cs.integrality, cs.one_hot_blocks, q.options.mixed);
    a.solver = "mixed";
    a.nodes = mr.nodes;
    out = std::move(mr.outcome);
    if (out.optimal()) certified_prog = std::make_shared<ProgramInstance>(std::move(mr.pinned));
    if (mr.budget_exceeded) a.detail = out.detail + ", gap " + std::to_string(mr.bound_gap);
  } else {
    out = solve_program(*prog);
    a.solver = prog->hessian.is_zero() ? "lp" : "qp";
  }
  a.status = from_solve_status(out.status);
  if (a.detail.empty()) a.detail = out.detail;
  if (out.optimal()) {
    const KktReport rep = check_kkt(*certified_prog, out);
    a.certified = rep.passed;
    a.kkt_residual = rep.residual;
    a.x = out.x.head(D);
  }
  a.program = certified_prog;
  a.outcome = std::make_shared<SolveOutcome>(std::move(out));
  return a;
}

void fill(LeafSolution& s, Attempt&& a) {
  s.status = a.status;
  s.x = std::move(a.x);
  s.solver = std::move(a.solver);
  s.detail = std::move(a.detail);
  s.certified = a.certified;
  s.kkt_residual = a.kkt_residual;
  s.nodes = a.nodes;
  s.program = std::move(a.program);
  s.outcome = std::move(a.outcome);
}

void validate_query(const Query& q) {
  if (!q.tree) throw Error(ErrorCode::InvalidArgument, "query has no tree");
  if (q.source.size() != q.tree->dim())
    throw Error(ErrorCode::DimensionMismatch, "source instance has " + std::to_string(q.source.size()) +
                                                  " coordinates, tree expects " + std::to_string(q.tree->dim()));
  if (q.cost.dim() != q.tree->dim()) throw Error(ErrorCode::DimensionMismatch, "cost dimension differs from the tree");
  // Query-level contradictions surface once, before any leaf is solved.
  compile(q.tree->schema(), q.source, q.constraints, nullptr, q.epsilon);
}

CounterfactualResult assemble(const Query& q, ClassLabel source_class, std::vector<LeafSolution> ledger) {
  CounterfactualResult r;
  r.source_class = source_class;
  for (auto& s : ledger) {
    if (s.feasible()) s.objective = s.cost + q.target.extra_cost(s.label);
    if (s.feasible()) r.diverse.push_back(s);
  }
  std::sort(r.diverse.begin(), r.diverse.end(), better);
  if (!r.diverse.empty()) {
    const auto& w = r.diverse.front();
    r.status = CounterfactualResult::Status::Found;
    r.x_star = w.x;
    r.objective = w.objective;
    r.cost = w.cost;
    r.leaf = w.leaf;
    r.label = w.label;
    r.boundary_adjusted = w.boundary_adjusted;
  }
  if (q.options.diverse_k > 0 && static_cast<int>(r.diverse.size()) > q.options.diverse_k)
    r.diverse.resize(static_cast<size_t>(q.options.diverse_k));
  r.ledger = std::move(ledger);
  return r;
}

}  // namespace

const char* leaf_status_name(LeafStatus s) {
  switch (s) {
    case LeafStatus::Optimal: return "optimal";
    case LeafStatus::Infeasible: return "infeasible";
    case LeafStatus::Unbounded: return "unbounded";
    case LeafStatus::Unresolved: return "boundary_unresolved";
    case LeafStatus::Error: return "error";
  }
  return "error";
}

LeafSolution solve_leaf(const Query& q, NodeId leaf, double epsilon, const std::optional<Vector>& warm) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& tree = *q.tree;
  LeafSolution s;
  s.leaf = leaf;
  s.label = tree.node(leaf).label;
  try {
    LeafRegion region = leaf_region(tree, leaf);
    if (q.options.prune_regions.value_or(region.rows.size() > 16)) region = prune_redundant(region);

    fill(s, attempt_leaf(q, region, epsilon, {}, warm));
    if (s.feasible() && predict(tree, s.x) != s.label) {
      // Routing sends f = 0 right, so an optimum on a left-turn face can land
      // in the sibling. Re-solve with a small margin, widening if needed.
      const double base = 1e-9 * std::max(1.0, s.x.lpNorm<Eigen::Infinity>());
      const Vector first = s.x;
      const std::pair<double, bool> schedule[] = {
          {base, false}, {base, true}, {1e2 * base, true}, {1e4 * base, true}, {1e6 * base, true}};
      bool resolved = false;
      for (const auto& [margin, all] : schedule) {
        // Cold start: the old optimum already sits within tolerance of the shifted face.
        Attempt a = attempt_leaf(q, region, epsilon, {margin, all}, std::nullopt);
        if (a.status != LeafStatus::Optimal) break;
        if (predict(tree, a.x) == s.label) {
          fill(s, std::move(a));
          s.boundary_adjusted = true;
          resolved = true;
          break;
        }
      }
      if (!resolved) {
        s.status = LeafStatus::Unresolved;
        s.x = first;
        s.detail = "optimum is not routed to the leaf's class";
      }
    }
    if (s.feasible()) {
      s.cost = q.cost.eval(s.x, q.source);
      s.objective = s.cost;
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonSeparableCostOnSeparablePath) throw;
    s.status = LeafStatus::Error;
    s.detail = e.what();
  } catch (const std::exception& e) {
    s.status = LeafStatus::Error;
    s.detail = e.what();
  }
  s.millis = millis_since(t0);
  return s;
}

bool has_solver_error(const CounterfactualResult& r) {
  return std::any_of(r.ledger.begin(), r.ledger.end(), [](const LeafSolution& s) { return s.status == LeafStatus::Error; });
}

CounterfactualResult explain(const Query& q) {
  validate_query(q);
  const auto& tree = *q.tree;
  const ClassLabel source_class = predict(tree, q.source);
  const auto classes = q.target.resolve(tree.class_count(), source_class);
  if (q.candidates) return dataset_search(q, *q.candidates);

  const auto leaves = target_leaves(tree, classes);
  std::vector<LeafSolution> ledger(leaves.size());
  run_indexed(leaves.size(), q.options.threads,
              [&](size_t i) { ledger[i] = solve_leaf(q, leaves[i], q.epsilon); });
  return assemble(q, source_class, std::move(ledger));
}

std::vector<LeafSolution> explain_diverse(const Query& query, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "diverse k must be >= 1");
  Query q = query;
  q.options.diverse_k = k;
  return explain(q).diverse;
}

std::vector<std::pair<double, CounterfactualResult>> explain_margin(const Query& q,
                                                                    const std::vector<double>& schedule) {
  if (schedule.empty() || schedule.front() != 0.0)
    throw Error(ErrorCode::InvalidEpsilon, "epsilon schedule must start at 0");
  for (size_t i = 1; i < schedule.size(); ++i)
    if (!(schedule[i] > schedule[i - 1]) || !std::isfinite(schedule[i]))
      throw Error(ErrorCode::InvalidEpsilon, "epsilon schedule must be strictly increasing");
  validate_query(q);
  const auto& tree = *q.tree;
  const ClassLabel source_class = predict(tree, q.source);
  const auto leaves = target_leaves(tree, q.target.resolve(tree.class_count(), source_class));

  // chains[leaf][step]
  std::vector<std::vector<LeafSolution>> chains(leaves.size());
  run_indexed(leaves.size(), q.options.threads, [&](size_t i) {
    std::optional<Vector> warm;
    bool dropped = false;
    for (double eps : schedule) {
      LeafSolution s;
      if (dropped) {
        s.leaf = leaves[i];
        s.label = tree.node(leaves[i]).label;
        s.status = LeafStatus::Infeasible;
        s.detail = "infeasible at a smaller epsilon";
      } else {
        s = solve_leaf(q, leaves[i], eps, warm);
        if (s.feasible()) warm = s.x;
        else if (s.status == LeafStatus::Infeasible) dropped = true;
      }
      chains[i].push_back(std::move(s));
    }
  });

  std::vector<std::pair<double, CounterfactualResult>> out;
  for (size_t step = 0; step < schedule.size(); ++step) {
    std::vector<LeafSolution> ledger;
    for (auto& c : chains) ledger.push_back(c[step]);
    out.emplace_back(schedule[step], assemble(q, source_class, std::move(ledger)));
  }
  return out;
}

CounterfactualResult dataset_search(const Query& q, const CandidatePool& pool) {
  validate_query(q);
  const auto& tree = *q.tree;
  CounterfactualResult r;
  r.source_class = predict(tree, q.source);
  const auto classes = q.target.resolve(tree.class_count(), r.source_class);
  const ConstraintSet cs = compile(tree.schema(), q.source, q.constraints, nullptr, 0.0);
  const bool ground_truth = q.options.label_source == LabelSource::GroundTruth;
  if (ground_truth && pool.labels.size() != pool.instances.size())
    throw Error(ErrorCode::InvalidArgument, "ground-truth search needs one label per candidate");

  std::vector<LeafSolution> ranked;
  for (size_t i = 0; i < pool.instances.size(); ++i) {
    const Vector& x = pool.instances[i];
    if (x.size() != tree.dim()) throw Error(ErrorCode::DimensionMismatch, "candidate has the wrong dimension");
    const ClassLabel y = ground_truth ? pool.labels[i] : predict(tree, x);
    if (std::find(classes.begin(), classes.end(), y) == classes.end()) continue;
    if (!check_feasible_point(cs, x, 1e-9)) continue;
    LeafSolution s;
    s.leaf = tree.route(x);
    s.label = y;
    s.status = LeafStatus::Optimal;
    s.x = x;
    s.cost = q.cost.eval(x, q.source);
    s.objective = s.cost + q.target.extra_cost(y);
    s.solver = "search";
    s.nodes = static_cast<long>(i);  // candidate index
    ranked.push_back(std::move(s));
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const LeafSolution& a, const LeafSolution& b) { return a.objective < b.objective; });
  if (!ranked.empty()) {
    const auto& w = ranked.front();
    r.status = CounterfactualResult::Status::Found;
    r.x_star = w.x;
    r.objective = w.objective;
    r.cost = w.cost;
    r.leaf = w.leaf;
    r.label = w.label;
    r.candidate_index = static_cast<int>(w.nodes);
  }
  const size_t keep = q.options.diverse_k > 0 ? static_cast<size_t>(q.options.diverse_k) : 0;
  if (ranked.size() > keep) ranked.resize(keep);
  r.diverse = std::move(ranked);
  return r;
}

Vector instance_from_json(const FeatureSchema& schema, const json& doc) {
  if (doc.is_array() || (doc.is_object() && doc.contains("x") && doc["x"].is_array())) {
    Vector x = detail::vector_from_json(doc.is_array() ? doc : doc["x"]);
    if (x.size() != schema.encoded_dim())
      throw Error(ErrorCode::DimensionMismatch, "instance has " + std::to_string(x.size()) +
                                                    " coordinates, schema has " + std::to_string(schema.encoded_dim()));
    if (!x.allFinite()) throw Error(ErrorCode::OutOfRangeValue, "instance has non-finite values");
    return encode(schema, decode(schema, x));
  }
  return encode(schema, raw_from_json(schema, doc));
}

Query query_from_json(std::shared_ptr<const TreeModel> tree, const json& body) {
  if (!tree) throw Error(ErrorCode::InvalidArgument, "no tree");
  if (!body.is_object()) throw Error(ErrorCode::MalformedDocument, "request body must be an object");
  // Runs one field's parser, attributing any failure to that field.
  auto field = [](const char* name, auto&& parse) {
    try {
      return parse();
    } catch (const Error& e) {
      throw e.field().empty() ? e.with_field(name) : e;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedDocument, std::string(name) + ": " + e.what()).with_field(name);
    }
  };
  Query q;
  q.tree = tree;
  if (!body.contains("instance"))
    throw Error(ErrorCode::MalformedDocument, "field 'instance' is required").with_field("instance");
  q.source = field("instance", [&] { return instance_from_json(tree->schema(), body["instance"]); });
  if (!body.contains("target"))
    throw Error(ErrorCode::MalformedDocument, "field 'target' is required").with_field("target");
  q.target = field("target", [&] { return target_from_json(body["target"]); });
  q.cost = field("cost", [&] {
    return body.contains("cost") && !body["cost"].is_null() ? cost_from_json(body["cost"], tree->dim())
                                                            : CostFunction::l2(tree->dim());
  });
  if (body.contains("constraints"))
    q.constraints = field("constraints", [&] { return user_constraints_from_json(body["constraints"]); });
  q.epsilon = field("epsilon", [&] {
    return body.contains("epsilon") && !body["epsilon"].is_null() ? body["epsilon"].get<double>()
                                                                  : q.constraints.epsilon;
  });
  q.options.diverse_k = field("diverse_k", [&] { return body.value("diverse_k", 0); });
  q.options.threads = field("threads", [&] { return body.value("threads", 0); });
  if (body.contains("prune_regions"))
    q.options.prune_regions = field("prune_regions", [&] { return body["prune_regions"].get<bool>(); });
  q.options.label_source = field("label_source", [&] {
    const auto ls = body.value("label_source", std::string("tree_prediction"));
    if (ls == "tree_prediction") return LabelSource::TreePrediction;
    if (ls == "ground_truth") return LabelSource::GroundTruth;
    throw Error(ErrorCode::MalformedDocument, "label_source must be tree_prediction or ground_truth");
  });
  return q;
}

namespace {

json raw_or_null(const FeatureSchema& schema, const Vector& x) {
  try {
    return raw_to_json(decode(schema, x));
  } catch (const Error&) {
    return nullptr;
  }
}

}  // namespace

json leaf_solution_to_json(const LeafSolution& s, const FeatureSchema& schema, bool include_timing) {
  json j{{"leaf", s.leaf}, {"label", s.label}, {"status", leaf_status_name(s.status)}};
  if (s.feasible()) {
    j["objective"] = s.objective;
    j["cost"] = s.cost;
    j["x"] = detail::vector_to_json(s.x);
    j["raw"] = raw_or_null(schema, s.x);
  } else {
    j["objective"] = nullptr;
  }
  j["solver"] = s.solver;
  j["boundary_adjusted"] = s.boundary_adjusted;
  if (s.solver != "separable" && s.solver != "search" && s.feasible()) {
    j["certified"] = s.certified;
    j["kkt_residual"] = s.kkt_residual;
  }
  if (s.solver == "mixed") j["nodes"] = s.nodes;
  if (!s.detail.empty()) j["detail"] = s.detail;
  j["millis"] = include_timing ? s.millis : 0.0;
  return j;
}

json result_to_json(const CounterfactualResult& r, const FeatureSchema& schema, bool include_timing) {
  json j;
  j["status"] = r.found() ? "found" : "no_feasible_leaf";
  j["source_class"] = r.source_class;
  if (r.found()) {
    j["x_star"] = detail::vector_to_json(r.x_star);
    j["raw"] = raw_or_null(schema, r.x_star);
    j["objective"] = r.objective;
    j["cost"] = r.cost;
    j["leaf"] = r.leaf;
    j["label"] = r.label;
  } else {
    j["x_star"] = nullptr;
    j["raw"] = nullptr;
    j["objective"] = nullptr;
    j["leaf"] = nullptr;
  }
  j["boundary_adjusted"] = r.boundary_adjusted;
  if (r.candidate_index) j["candidate_index"] = *r.candidate_index;
  json diverse = json::array();
  for (const auto& s : r.diverse) {
    json e{{"leaf", s.leaf},     {"label", s.label}, {"objective", s.objective}, {"cost", s.cost},
           {"x", detail::vector_to_json(s.x)}, {"raw", raw_or_null(schema, s.x)},
           {"boundary_adjusted", s.boundary_adjusted}};
    diverse.push_back(std::move(e));
  }
  j["diverse"] = std::move(diverse);
  json ledger = json::array();
  for (const auto& s : r.ledger) {
    json e = leaf_solution_to_json(s, schema, include_timing);
    e.erase("x");
    e.erase("raw");
    ledger.push_back(std::move(e));
  }
  j["ledger"] = std::move(ledger);
  return j;
}

}  // namespace cftree

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cftree/constraints.hpp"
#include "cftree/cost.hpp"
#include "cftree/mixed_integer.hpp"
#include "cftree/tree_model.hpp"

namespace cftree {

enum class LabelSource { TreePrediction, GroundTruth };

struct QueryOptions {
  int diverse_k = 0;  // 0: keep every feasible leaf
  int threads = 0;    // 0: hardware concurrency
  std::optional<bool> prune_regions;  // default: prune paths longer than 16 rows
  bool force_general = false;         // bypass the separable fast path
  LabelSource label_source = LabelSource::TreePrediction;
  MixedOptions mixed;
};

/// Finite set of instances the counterfactual may be chosen from.
struct CandidatePool {
  std::vector<Vector> instances;
  std::vector<ClassLabel> labels;  // ground truth, may be empty
};

struct Query {
  std::shared_ptr<const TreeModel> tree;
  Vector source;
  TargetSpec target;
  CostFunction cost;
  UserConstraints constraints;
  double epsilon = 0.0;
  QueryOptions options;
  std::shared_ptr<const CandidatePool> candidates;  // set: restrict to the pool
};

enum class LeafStatus { Optimal, Infeasible, Unbounded, Unresolved, Error };

const char* leaf_status_name(LeafStatus s);

struct LeafSolution {
  NodeId leaf = 0;
  ClassLabel label = 0;
  LeafStatus status = LeafStatus::Infeasible;
  Vector x;
  double cost = 0.0;       // E(x; x̄)
  double objective = 0.0;  // cost plus the class cost of the leaf's label
  double millis = 0.0;
  std::string solver;  // separable | lp | qp | mixed
  std::string detail;
  bool boundary_adjusted = false;
  bool certified = false;  // KKT certificate passed (separable: not applicable)
  double kkt_residual = 0.0;
  long nodes = 0;  // branch-and-bound nodes
  // Certified program and outcome, kept for dumps.
  std::shared_ptr<const ProgramInstance> program;
  std::shared_ptr<const SolveOutcome> outcome;

  bool feasible() const { return status == LeafStatus::Optimal; }
};

struct CounterfactualResult {
  enum class Status { Found, NoFeasibleLeaf };
  Status status = Status::NoFeasibleLeaf;
  ClassLabel source_class = 0;
  Vector x_star;
  double objective = 0.0;
  double cost = 0.0;
  NodeId leaf = 0;
  ClassLabel label = 0;
  bool boundary_adjusted = false;
  std::vector<LeafSolution> diverse;  // feasible leaves, ascending objective
  std::vector<LeafSolution> ledger;   // every enumerated leaf, ascending id
  std::optional<int> candidate_index;

  bool found() const { return status == Status::Found; }
};

/// True when some leaf's solve failed internally, so the result is not certified exact.
bool has_solver_error(const CounterfactualResult& result);

/// Exact counterfactual: the best per-leaf optimum over the target leaves.
CounterfactualResult explain(const Query& query);

/// The feasible per-leaf optima, best first, at most k.
std::vector<LeafSolution> explain_diverse(const Query& query, int k);

/// One result per epsilon; each leaf warm-starts from its previous solution
/// and stays dropped once infeasible.
std::vector<std::pair<double, CounterfactualResult>> explain_margin(const Query& query,
                                                                    const std::vector<double>& schedule);

/// Best qualifying member of a finite pool (training-set search baseline).
CounterfactualResult dataset_search(const Query& query, const CandidatePool& pool);

/// Solve a single leaf (used by explain and by the dispatch tests).
LeafSolution solve_leaf(const Query& query, NodeId leaf, double epsilon,
                        const std::optional<Vector>& warm = std::nullopt);

// Documents.

/// Instance documents: an array of encoded values, {"x": [...]}, or an
/// object keyed by feature name. Validated against the schema.
Vector instance_from_json(const FeatureSchema& schema, const nlohmann::json& doc);

/// Builds a query from a request body {instance, target, cost, constraints,
/// epsilon, diverse_k}.
Query query_from_json(std::shared_ptr<const TreeModel> tree, const nlohmann::json& body);

nlohmann::json result_to_json(const CounterfactualResult& result, const FeatureSchema& schema,
                              bool include_timing = true);
nlohmann::json leaf_solution_to_json(const LeafSolution& s, const FeatureSchema& schema, bool include_timing);

}  // namespace cftree

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cftree/cost.hpp"
#include "cftree/program.hpp"
#include "cftree/tree_model.hpp"

namespace cftree {

/// User-supplied constraints, keyed by feature name. "*" in freeze or
/// monotone stands for every continuous feature.
struct UserConstraints {
  std::vector<std::string> freeze;
  std::vector<std::string> unfreeze;  // overrides immutable_by_default
  std::map<std::string, std::pair<double, double>> bounds;
  std::map<std::string, Monotone> monotone;
  std::map<std::string, double> max_delta;
  double epsilon = 0.0;
  std::optional<std::string> candidate_set;

  bool operator==(const UserConstraints&) const = default;
};

UserConstraints user_constraints_from_json(const nlohmann::json& doc);
nlohmann::json user_constraints_to_json(const UserConstraints& uc);

enum class RowOrigin { Region, OneHot };

struct ConstraintRow {
  Vector a;
  double rhs = 0.0;
  RowOrigin origin = RowOrigin::Region;
  NodeId node = 0;      // region rows: the decision node
  bool strict = false;  // region rows from left turns
};

/// Canonical compiled constraints for one leaf (or none).
///
/// Constraints on a single coordinate (schema and user bounds, freezes,
/// monotone, max_delta, axis-aligned path rows) are folded into the bound
/// vectors; only rows touching several coordinates are kept as rows.
struct ConstraintSet {
  int dim = 0;
  Vector lower;
  Vector upper;
  std::vector<bool> frozen;        // x_d pinned to x̄_d
  std::vector<bool> upper_strict;  // upper bound comes from a left turn
  std::vector<ConstraintRow> inequalities;  // a.x >= rhs
  std::vector<ConstraintRow> equalities;    // a.x == rhs
  std::vector<int> integrality;
  std::vector<CoordRange> one_hot_blocks;
  std::optional<std::string> candidate_set;

  // Nothing couples coordinates beyond one-hot blocks.
  bool separable() const { return inequalities.empty(); }
  bool has_integrality() const { return !integrality.empty(); }
};

struct CompileOptions {
  // Extra margin on strict (left-turn) path rows, or on all path rows.
  double strict_margin = 0.0;
  bool margin_all_rows = false;
};

/// region may be null, giving the user and schema constraints only.
ConstraintSet compile(const FeatureSchema& schema, const Vector& source, const UserConstraints& user,
                      const LeafRegion* region, double epsilon, const CompileOptions& options = {});

bool check_feasible_point(const ConstraintSet& cs, const Vector& x, double tolerance);

/// The program min E(x) s.t. cs, over x and the L1 auxiliaries (integrality dropped).
ProgramInstance build_program(const ConstraintSet& cs, const LoweredCost& cost);

struct TargetSpec {
  enum class Mode { Single, Subset, ClassCost };
  Mode mode = Mode::Single;
  std::vector<ClassLabel> classes;  // single: one entry
  std::vector<double> class_costs;  // class_cost: L(y) for y = 1..K
  bool allow_same_class = false;

  static TargetSpec single(ClassLabel y);
  static TargetSpec subset(std::vector<ClassLabel> ys);
  static TargetSpec class_cost(std::vector<double> costs);

  /// Classes whose leaves are enumerated, validated against K and the
  /// source class.
  std::vector<ClassLabel> resolve(int class_count, ClassLabel source) const;
  double extra_cost(ClassLabel y) const;
};

TargetSpec target_from_json(const nlohmann::json& doc);
nlohmann::json target_to_json(const TargetSpec& t);

}  // namespace cftree

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cftree/constraints.hpp"
#include "cftree/cost.hpp"
#include "cftree/mixed_integer.hpp"
#include "cftree/tree_model.hpp"

namespace cftree {

struct SyntheticDataset {
  FeatureSchema schema;
  std::vector<Vector> rows;  // encoded
  std::vector<ClassLabel> labels;
  std::uint64_t seed = 0;
};

/// Columnar document {schema, rows, labels}; rows may be encoded arrays or
/// raw objects keyed by feature name.
SyntheticDataset dataset_from_json(const nlohmann::json& doc);
nlohmann::json dataset_to_json(const SyntheticDataset& data);

/// Gaussian blobs, one per class, centers uniform in [-3, 3]^D.
SyntheticDataset make_blobs(int dim, int classes, int per_class, double spread, std::uint64_t seed);

/// Mixed continuous/categorical census-style data with a rule-based label.
SyntheticDataset make_census_like(int n, std::uint64_t seed);

/// Greedy Gini splits at midpoints, majority leaves (lowest class on ties).
TreeModel train_axis_aligned(const SyntheticDataset& data, int max_depth, int min_samples_split = 2);

/// Complete oblique tree with unit-norm Gaussian weights and biases at a
/// random [0.3, 0.7] quantile of a reference sample routed to each node.
/// Leaves are labeled round-robin. Categorical blocks of `schema` are
/// sampled as random one-hot vectors.
TreeModel gen_random_oblique(int dim, int depth, int classes, std::uint64_t seed,
                             std::optional<FeatureSchema> schema = std::nullopt);

// Independent oracles.

enum class OracleMode { Grid, KktEnumeration, Sampling };

struct OracleOptions {
  double radius = 10.0;  // half-width used where a bound is infinite
  int grid_points = 0;   // per dimension; 0: chosen from D
  int samples = 100000;
  std::uint64_t seed = 1;
};

struct OracleResult {
  double value = 0.0;  // +inf when no feasible point was found
  Vector point;
  double resolution = 0.0;        // final lattice spacing (grid)
  double value_resolution = 0.0;  // objective change across the final refinement window (grid)
};

/// Minimum of cost over the compiled constraints (which include the region rows).
OracleResult oracle_minimum(const ConstraintSet& cs, const CostFunction& cost, const Vector& center,
                            OracleMode mode, const OracleOptions& options = {});

/// Lattice scan of the target region: min E(x) + extra(label) over lattice
/// points whose prediction is a target class and which satisfy cs (built
/// without a region). Each target leaf gets a lattice over its bounding box,
/// refined twice around its best point.
OracleResult tree_grid_oracle(const TreeModel& tree, const std::vector<ClassLabel>& classes,
                              const std::vector<double>& extra, const ConstraintSet& cs,
                              const CostFunction& cost, const Vector& center, const OracleOptions& options = {});

/// Exhaustive enumeration over one-hot assignments (and lone binaries),
/// solving each pinned continuous subproblem.
SolveOutcome enumerate_assignments(const ProgramInstance& prog, const std::vector<int>& integrality,
                                   const std::vector<CoordRange>& one_hot_blocks);

/// A small mixed problem on which relax_and_round fails.
struct RoundingFixture {
  ProgramInstance program;
  std::vector<int> integrality;
  std::vector<CoordRange> blocks;
  std::uint64_t seed = 0;
};

enum class RoundingPitfall { Infeasible, Suboptimal };

/// Seeded search for a fixture showing the given pitfall.
RoundingFixture find_rounding_fixture(RoundingPitfall kind, std::uint64_t seed, int max_tries = 100000);

nlohmann::json rounding_fixture_to_json(const RoundingFixture& f);
RoundingFixture rounding_fixture_from_json(const nlohmann::json& doc);

}  // namespace cftree

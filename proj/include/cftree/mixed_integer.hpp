#pragma once

#include <vector>

#include "cftree/convex.hpp"

namespace cftree {

struct MixedOptions {
  long node_budget = 1000000;
  double prune_tol = 1e-9;
  double integrality_tol = 1e-9;
  SolverOptions solver;
};

struct MixedResult {
  // Final solve with every integrality coordinate pinned to its 0/1 value.
  SolveOutcome outcome;
  ProgramInstance pinned;  // the program `outcome` is optimal for
  long nodes = 0;
  bool budget_exceeded = false;
  double bound_gap = 0.0;        // incumbent minus best open bound when the budget is hit
  int bound_violations = 0;      // children whose bound fell below their parent's
};

/// Best-first branch-and-bound over binary coordinates. Relaxations drop
/// integrality; branching fixes the most fractional coordinate to 1 (zeroing
/// its block siblings), then to 0.
MixedResult solve_mixed(const ProgramInstance& prog, const std::vector<int>& integrality,
                        const std::vector<CoordRange>& one_hot_blocks, const MixedOptions& options = {});

struct RoundingResult {
  SolveOutcome relaxation;
  Vector x;  // relaxation point with each block rounded to its largest entry
  bool feasible = false;
  double objective = 0.0;
};

/// Relax, then round. Only for demonstrating why rounding is not exact.
RoundingResult relax_and_round(const ProgramInstance& prog, const std::vector<int>& integrality,
                               const std::vector<CoordRange>& one_hot_blocks, double tolerance = 1e-9);

}  // namespace cftree

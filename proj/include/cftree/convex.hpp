#pragma once

#include <vector>

#include "cftree/program.hpp"

namespace cftree {

/// Minimizer of any convex scalar cost centered at `center` over [lower, upper]:
/// the median of the three values. Throws EmptyInterval when lower > upper.
double median_clip(double center, double lower, double upper);

/// Per-coordinate cost E_d(v) = l1[d] |v - center_d| + l2[d] (v - center_d)^2.
struct SeparableCost {
  Vector l1;
  Vector l2;

  double term(int d, double v, double center) const;
};

struct SeparableBlock {
  int offset = 0;
  int size = 0;
  std::vector<bool> admissible;  // empty: derive from the box
};

/// Problem whose every constraint touches one coordinate (or one one-hot block).
/// Continuous coordinates are solved by median_clip; blocks by enumerating
/// admissible categories, lowest index winning ties.
SolveOutcome solve_separable(const Vector& center, const Vector& lower, const Vector& upper,
                             const SeparableCost& cost, const std::vector<SeparableBlock>& blocks);

struct SolverOptions {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  int iteration_limit = 0;  // 0: 50 * (variables + rows)
};

/// Dense two-phase bounded-variable primal simplex. The hessian must be zero.
SolveOutcome solve_lp(const ProgramInstance& prog, const SolverOptions& opts = {});

/// Primal active-set method for convex QPs. Starts from the warm start when it
/// is feasible, otherwise from a phase-one simplex vertex.
SolveOutcome solve_qp(const ProgramInstance& prog, const SolverOptions& opts = {});

/// solve_lp for zero hessians, solve_qp otherwise.
SolveOutcome solve_program(const ProgramInstance& prog, const SolverOptions& opts = {});

/// Feasible point of the constraints (phase one only), or nullopt.
std::optional<Vector> find_feasible_point(const ProgramInstance& prog, const SolverOptions& opts = {});

}  // namespace cftree

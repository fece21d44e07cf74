#include "cftree/mixed_integer.hpp"

#include <cmath>
#include <queue>
#include <string>

#include "cftree/error.hpp"

namespace cftree {

namespace {

struct Node {
  std::vector<signed char> fix;  // per integrality index: -1 free, 0, 1
  double bound = -kInf;
  int depth = 0;
  long seq = 0;
  Vector warm;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.seq < b.seq;
  }
};

ProgramInstance with_fixes(const ProgramInstance& prog, const std::vector<int>& integrality,
                           const std::vector<signed char>& fix) {
  ProgramInstance p = prog;
  for (size_t k = 0; k < integrality.size(); ++k) {
    if (fix[k] < 0) continue;
    const int d = integrality[k];
    p.lower[d] = p.upper[d] = fix[k];
  }
  return p;
}

}  // namespace

MixedResult solve_mixed(const ProgramInstance& prog, const std::vector<int>& integrality,
                        const std::vector<CoordRange>& one_hot_blocks, const MixedOptions& options) {
  prog.validate();
  const size_t m = integrality.size();
  std::vector<int> where(static_cast<size_t>(prog.num_vars()), -1);
  for (size_t k = 0; k < m; ++k) {
    const int d = integrality[k];
    if (d < 0 || d >= prog.num_vars()) throw Error(ErrorCode::InvalidArgument, "integrality index out of range");
    if (prog.lower[d] < 0.0 || prog.upper[d] > 1.0)
      throw Error(ErrorCode::InvalidArgument, "integrality coordinates need bounds within [0, 1]");
    where[static_cast<size_t>(d)] = static_cast<int>(k);
  }
  std::vector<int> block_of(m, -1);
  for (size_t b = 0; b < one_hot_blocks.size(); ++b)
    for (int i = 0; i < one_hot_blocks[b].size; ++i) {
      const int k = where[static_cast<size_t>(one_hot_blocks[b].offset + i)];
      if (k < 0) throw Error(ErrorCode::InvalidArgument, "one-hot coordinate missing from integrality");
      block_of[static_cast<size_t>(k)] = static_cast<int>(b);
    }

  MixedResult result;
  result.outcome.status = SolveStatus::Infeasible;
  double incumbent = kInf;
  bool unbounded = false;

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  long seq = 0;
  Node root;
  root.fix.assign(m, -1);
  // Pre-fix coordinates whose bounds already pin them.
  for (size_t k = 0; k < m; ++k) {
    const int d = integrality[k];
    if (prog.upper[d] < 0.5) root.fix[k] = 0;
    else if (prog.lower[d] > 0.5) root.fix[k] = 1;
  }
  root.seq = seq++;
  open.push(root);

  while (!open.empty()) {
    if (result.nodes >= options.node_budget) {
      result.budget_exceeded = true;
      result.bound_gap = incumbent - open.top().bound;
      result.outcome.detail = "NodeBudgetExceeded after " + std::to_string(result.nodes) + " nodes";
      break;
    }
    Node node = open.top();
    open.pop();
    if (node.bound >= incumbent - options.prune_tol) continue;
    ++result.nodes;

    ProgramInstance relax = with_fixes(prog, integrality, node.fix);
    if (node.warm.size() > 0) relax.warm_start = node.warm;
    SolveOutcome sol = solve_program(relax, options.solver);
    if (sol.status == SolveStatus::Unbounded) {
      unbounded = true;
      break;
    }
    if (!sol.optimal()) continue;
    if (sol.objective < node.bound - options.prune_tol) ++result.bound_violations;
    if (sol.objective >= incumbent - options.prune_tol) continue;

    // Most fractional free coordinate.
    int branch = -1;
    double best_frac = options.integrality_tol;
    for (size_t k = 0; k < m; ++k) {
      if (node.fix[k] >= 0) continue;
      const double v = sol.x[integrality[k]];
      const double frac = std::min(std::abs(v), std::abs(1.0 - v));
      if (frac > best_frac) {
        best_frac = frac;
        branch = static_cast<int>(k);
      }
    }

    if (branch < 0) {
      // Integral within tolerance: pin exactly and re-solve the continuous part.
      std::vector<signed char> pin = node.fix;
      for (size_t k = 0; k < m; ++k)
        if (pin[k] < 0) pin[k] = sol.x[integrality[k]] > 0.5 ? 1 : 0;
      ProgramInstance pinned = with_fixes(prog, integrality, pin);
      pinned.warm_start = sol.x;
      SolveOutcome exact = solve_program(pinned, options.solver);
      if (exact.optimal() && exact.objective < incumbent) {
        incumbent = exact.objective;
        result.outcome = exact;
        result.pinned = std::move(pinned);
      }
      continue;
    }

    const auto bk = static_cast<size_t>(branch);
    Node one = node, zero = node;
    one.fix[bk] = 1;
    if (block_of[bk] >= 0) {
      const auto& blk = one_hot_blocks[static_cast<size_t>(block_of[bk])];
      for (int i = 0; i < blk.size; ++i) {
        const auto k = static_cast<size_t>(where[static_cast<size_t>(blk.offset + i)]);
        if (k != bk) {
          if (one.fix[k] == 1) one.fix[k] = 2;  // conflicting: mark infeasible
          else one.fix[k] = 0;
        }
      }
    }
    zero.fix[bk] = 0;
    for (Node* child : {&one, &zero}) {
      bool conflict = false;
      for (auto f : child->fix) conflict = conflict || f > 1;
      if (conflict) continue;
      child->bound = sol.objective;
      child->depth = node.depth + 1;
      child->seq = seq++;
      child->warm = sol.x;
      open.push(*child);
    }
  }

  if (unbounded) {
    result.outcome = SolveOutcome{};
    result.outcome.status = SolveStatus::Unbounded;
    result.outcome.detail = "relaxation is unbounded";
  }
  result.outcome.iterations = static_cast<int>(result.nodes);
  return result;
}

RoundingResult relax_and_round(const ProgramInstance& prog, const std::vector<int>& integrality,
                               const std::vector<CoordRange>& one_hot_blocks, double tolerance) {
  RoundingResult out;
  out.relaxation = solve_program(prog);
  if (!out.relaxation.optimal()) return out;
  out.x = out.relaxation.x;
  std::vector<char> in_block(static_cast<size_t>(prog.num_vars()), 0);
  for (const auto& b : one_hot_blocks) {
    Eigen::Index arg = 0;
    out.x.segment(b.offset, b.size).maxCoeff(&arg);
    for (int i = 0; i < b.size; ++i) {
      out.x[b.offset + i] = i == arg ? 1.0 : 0.0;
      in_block[static_cast<size_t>(b.offset + i)] = 1;
    }
  }
  for (int d : integrality)
    if (!in_block[static_cast<size_t>(d)]) out.x[d] = std::round(out.x[d]);
  out.feasible = prog.max_violation(out.x) <= tolerance;
  out.objective = prog.objective(out.x);
  return out;
}

}  // namespace cftree

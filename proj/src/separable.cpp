#include <cmath>
#include <string>

#include "cftree/convex.hpp"
#include "cftree/error.hpp"

namespace cftree {

double median_clip(double center, double lower, double upper) {
  if (lower > upper)
    throw Error(ErrorCode::EmptyInterval,
                "[" + std::to_string(lower) + ", " + std::to_string(upper) + "] is empty");
  if (center < lower) return lower;
  if (center > upper) return upper;
  return center;
}

double SeparableCost::term(int d, double v, double center) const {
  const double delta = v - center;
  double e = 0.0;
  if (l1.size() > 0) e += l1[d] * std::abs(delta);
  if (l2.size() > 0) e += l2[d] * delta * delta;
  return e;
}

SolveOutcome solve_separable(const Vector& center, const Vector& lower, const Vector& upper,
                             const SeparableCost& cost, const std::vector<SeparableBlock>& blocks) {
  const auto D = center.size();
  if (lower.size() != D || upper.size() != D || (cost.l1.size() != 0 && cost.l1.size() != D) ||
      (cost.l2.size() != 0 && cost.l2.size() != D))
    throw Error(ErrorCode::DimensionMismatch, "separable problem dimensions disagree");

  SolveOutcome out;
  out.x = center;
  std::vector<char> in_block(static_cast<size_t>(D), 0);
  for (const auto& b : blocks)
    for (int k = 0; k < b.size; ++k) in_block[static_cast<size_t>(b.offset + k)] = 1;

  double objective = 0.0;
  for (Eigen::Index d = 0; d < D; ++d) {
    if (in_block[static_cast<size_t>(d)]) continue;
    if (lower[d] > upper[d]) {
      out.status = SolveStatus::Infeasible;
      out.detail = "EmptyInterval at coordinate " + std::to_string(d);
      return out;
    }
    out.x[d] = median_clip(center[d], lower[d], upper[d]);
    objective += cost.term(static_cast<int>(d), out.x[d], center[d]);
  }

  for (const auto& b : blocks) {
    int best = -1;
    double best_cost = kInf;
    for (int c = 0; c < b.size; ++c) {
      bool ok = b.admissible.empty() || b.admissible[static_cast<size_t>(c)];
      double e = 0.0;
      for (int k = 0; k < b.size && ok; ++k) {
        const int d = b.offset + k;
        const double v = k == c ? 1.0 : 0.0;
        if (v < lower[d] || v > upper[d]) ok = false;
        e += cost.term(d, v, center[d]);
      }
      if (ok && e < best_cost) {
        best_cost = e;
        best = c;
      }
    }
    if (best < 0) {
      out.status = SolveStatus::Infeasible;
      out.detail = "NoAdmissibleCategory in block at coordinate " + std::to_string(b.offset);
      return out;
    }
    for (int k = 0; k < b.size; ++k) out.x[b.offset + k] = k == best ? 1.0 : 0.0;
    objective += best_cost;
  }

  out.status = SolveStatus::Optimal;
  out.objective = objective;
  out.iterations = 1;
  return out;
}

}  // namespace cftree

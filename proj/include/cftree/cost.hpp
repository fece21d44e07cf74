#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cftree/program.hpp"

namespace cftree {

struct CostTerm;

/// Cost of moving from a source instance x̄ to x, as a function of δ = x - x̄.
///
/// The user-facing variant tree is kept for serialization; at construction it
/// is flattened into at most one L1 weight vector, one diagonal L2 weight
/// vector and one dense PSD matrix, so E(x) = Σ l1|δ| + Σ l2 δ² + δ'Qδ.
class CostFunction {
 public:
  enum class Variant { L2, L1, Quadratic, Combination };

  struct GridShorthand {
    int height = 0;
    int width = 0;
    double diag = 1.0;
    double neighbor = -0.25;
  };

  CostFunction() = default;
  static CostFunction l2(int dim, std::optional<Vector> weights = std::nullopt);
  static CostFunction l1(int dim, std::optional<Vector> weights = std::nullopt);
  static CostFunction quadratic(Matrix q);
  static CostFunction grid(const GridShorthand& g);
  static CostFunction combination(const std::vector<CostTerm>& terms);

  Variant variant() const { return variant_; }
  int dim() const { return dim_; }
  double eval(const Vector& x, const Vector& center) const;

  // Flattened parts; empty vectors / 0x0 matrix when absent.
  const Vector& l1_weights() const { return l1_; }
  const Vector& l2_weights() const { return l2_; }
  const Matrix& q_matrix() const { return q_; }
  bool has_l1() const { return l1_.size() > 0 && (l1_.array() > 0).any(); }
  bool has_dense() const { return q_.size() > 0; }
  // Every term acts on one coordinate at a time.
  bool separable() const { return !has_dense(); }
  bool psd_rank_deficient() const { return rank_deficient_; }

  // Per-coordinate weights of the separable form (zeros where absent).
  Vector l1_or_zero() const;
  Vector l2_or_zero() const;
  // Hessian of E over x: 2 (diag(l2) + Q).
  QuadraticForm hessian() const;

  nlohmann::json to_json() const;

 private:
  void flatten_into(double scale, Vector& l1, Vector& l2, Matrix& q) const;
  void finish();

  Variant variant_ = Variant::L2;
  int dim_ = 0;
  Vector weights_;  // L1 / L2 declared weights
  Matrix q_input_;
  std::optional<GridShorthand> grid_;
  std::vector<std::pair<double, std::shared_ptr<const CostFunction>>> terms_;

  Vector l1_;
  Vector l2_;
  Matrix q_;
  bool rank_deficient_ = false;
};

struct CostTerm {
  double coefficient = 1.0;
  CostFunction cost;
};

/// Parses a cost document. Missing weights default to 1 per coordinate.
CostFunction cost_from_json(const nlohmann::json& doc, int dim);

/// A cost rewritten as a program over (x, t): quadratic part in x, one
/// auxiliary t_k per L1 coordinate with rows t_k - x_d >= -x̄_d and
/// t_k + x_d >= x̄_d. Minimizing the objective over any polytope in x gives
/// the minimum of E over it.
struct LoweredCost {
  int dim = 0;
  std::vector<int> aux_coord;  // coordinate of each auxiliary
  QuadraticForm hessian;       // over dim + aux
  Vector linear;
  double constant = 0.0;
  RowMatrix rows;  // over dim + aux
  Vector rhs;

  int num_vars() const { return dim + static_cast<int>(aux_coord.size()); }
};

LoweredCost lower_to_program(const CostFunction& cost, const Vector& center);

}  // namespace cftree

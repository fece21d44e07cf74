#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cftree/feature_space.hpp"

namespace cftree {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Symmetric PSD form x -> 1/2 x'Hx stored as zero, diagonal or dense.
class QuadraticForm {
 public:
  enum class Kind { Zero, Diagonal, Dense };

  QuadraticForm() = default;
  static QuadraticForm zero(int n);
  static QuadraticForm diagonal(Vector diag);
  static QuadraticForm dense(Matrix h);

  Kind kind() const { return kind_; }
  int size() const { return n_; }
  bool is_zero() const { return kind_ == Kind::Zero; }
  const Vector& diag() const { return diag_; }
  const Matrix& dense_matrix() const { return dense_; }

  Vector apply(const Vector& x) const;
  double value(const Vector& x) const { return 0.5 * x.dot(apply(x)); }
  Matrix to_dense() const;
  double entry(int i, int j) const;
  // Padded with zero rows/columns up to n variables.
  QuadraticForm extended(int n) const;

 private:
  Kind kind_ = Kind::Zero;
  int n_ = 0;
  Vector diag_;
  Matrix dense_;
};

/// min 1/2 x'Hx + c'x + constant
/// s.t. eq_rows x = eq_rhs, ineq_rows x >= ineq_rhs, lower <= x <= upper.
struct ProgramInstance {
  QuadraticForm hessian;
  Vector linear;
  double constant = 0.0;
  Vector lower;
  Vector upper;
  RowMatrix eq_rows;
  Vector eq_rhs;
  RowMatrix ineq_rows;
  Vector ineq_rhs;
  std::optional<Vector> warm_start;

  static ProgramInstance unconstrained(int n);

  int num_vars() const { return static_cast<int>(linear.size()); }
  int num_eq() const { return static_cast<int>(eq_rows.rows()); }
  int num_ineq() const { return static_cast<int>(ineq_rows.rows()); }
  double objective(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  // Largest violation over rows and bounds.
  double max_violation(const Vector& x) const;
  void add_eq(const Vector& row, double rhs);
  void add_ineq(const Vector& row, double rhs);
  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded };

const char* status_name(SolveStatus s);

struct SolveOutcome {
  SolveStatus status = SolveStatus::Infeasible;
  Vector x;
  double objective = 0.0;
  std::vector<int> active_rows;  // indices into ineq_rows
  Vector eq_duals;
  Vector ineq_duals;   // >= 0
  Vector bound_duals;  // > 0 at an active lower bound, < 0 at an active upper bound
  double kkt_residual = 0.0;
  int iterations = 0;
  std::string detail;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double residual = 0.0;  // max of the above
  bool passed = false;
};

inline constexpr double kKktTolerance = 1e-8;

/// Independent optimality check of a claimed optimum against its program,
/// using the multipliers carried by the outcome. Passes when every residual
/// is within tolerance * (1 + |objective|).
KktReport check_kkt(const ProgramInstance& prog, const SolveOutcome& outcome,
                    double tolerance = kKktTolerance);

nlohmann::json program_to_json(const ProgramInstance& prog);
ProgramInstance program_from_json(const nlohmann::json& doc);
nlohmann::json outcome_to_json(const SolveOutcome& outcome);
SolveOutcome outcome_from_json(const nlohmann::json& doc);

}  // namespace cftree

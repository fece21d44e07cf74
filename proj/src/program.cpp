#include "cftree/program.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cftree/error.hpp"
#include "json_util.hpp"

namespace cftree {

using nlohmann::json;

QuadraticForm QuadraticForm::zero(int n) {
  QuadraticForm q;
  q.n_ = n;
  return q;
}

QuadraticForm QuadraticForm::diagonal(Vector diag) {
  QuadraticForm q;
  q.n_ = static_cast<int>(diag.size());
  if ((diag.array() == 0.0).all()) return q;
  q.kind_ = Kind::Diagonal;
  q.diag_ = std::move(diag);
  return q;
}

QuadraticForm QuadraticForm::dense(Matrix h) {
  if (h.rows() != h.cols()) throw Error(ErrorCode::DimensionMismatch, "hessian must be square");
  QuadraticForm q;
  q.n_ = static_cast<int>(h.rows());
  if ((h.array() == 0.0).all()) return q;
  q.kind_ = Kind::Dense;
  q.dense_ = std::move(h);
  return q;
}

Vector QuadraticForm::apply(const Vector& x) const {
  switch (kind_) {
    case Kind::Zero: return Vector::Zero(n_);
    case Kind::Diagonal: return diag_.cwiseProduct(x);
    case Kind::Dense: return dense_ * x;
  }
  return Vector::Zero(n_);
}

Matrix QuadraticForm::to_dense() const {
  switch (kind_) {
    case Kind::Zero: return Matrix::Zero(n_, n_);
    case Kind::Diagonal: return diag_.asDiagonal();
    case Kind::Dense: return dense_;
  }
  return Matrix::Zero(n_, n_);
}

double QuadraticForm::entry(int i, int j) const {
  switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Diagonal: return i == j ? diag_[i] : 0.0;
    case Kind::Dense: return dense_(i, j);
  }
  return 0.0;
}

QuadraticForm QuadraticForm::extended(int n) const {
  if (n == n_) return *this;
  switch (kind_) {
    case Kind::Zero: return zero(n);
    case Kind::Diagonal: {
      Vector d = Vector::Zero(n);
      d.head(n_) = diag_;
      QuadraticForm q = diagonal(std::move(d));
      return q;
    }
    case Kind::Dense: {
      Matrix h = Matrix::Zero(n, n);
      h.topLeftCorner(n_, n_) = dense_;
      return dense(std::move(h));
    }
  }
  return zero(n);
}

ProgramInstance ProgramInstance::unconstrained(int n) {
  ProgramInstance p;
  p.hessian = QuadraticForm::zero(n);
  p.linear = Vector::Zero(n);
  p.lower = Vector::Constant(n, -kInf);
  p.upper = Vector::Constant(n, kInf);
  p.eq_rows = RowMatrix(0, n);
  p.eq_rhs = Vector(0);
  p.ineq_rows = RowMatrix(0, n);
  p.ineq_rhs = Vector(0);
  return p;
}

double ProgramInstance::objective(const Vector& x) const {
  return hessian.value(x) + linear.dot(x) + constant;
}

Vector ProgramInstance::gradient(const Vector& x) const { return hessian.apply(x) + linear; }

double ProgramInstance::max_violation(const Vector& x) const {
  double v = 0.0;
  for (int j = 0; j < num_vars(); ++j) {
    v = std::max(v, lower[j] - x[j]);
    v = std::max(v, x[j] - upper[j]);
  }
  if (num_eq() > 0) v = std::max(v, (eq_rows * x - eq_rhs).cwiseAbs().maxCoeff());
  if (num_ineq() > 0) v = std::max(v, (ineq_rhs - ineq_rows * x).maxCoeff());
  return v;
}

void ProgramInstance::add_eq(const Vector& row, double rhs) {
  const auto m = eq_rows.rows();
  eq_rows.conservativeResize(m + 1, num_vars());
  eq_rows.row(m) = row.transpose();
  eq_rhs.conservativeResize(m + 1);
  eq_rhs[m] = rhs;
}

void ProgramInstance::add_ineq(const Vector& row, double rhs) {
  const auto m = ineq_rows.rows();
  ineq_rows.conservativeResize(m + 1, num_vars());
  ineq_rows.row(m) = row.transpose();
  ineq_rhs.conservativeResize(m + 1);
  ineq_rhs[m] = rhs;
}

void ProgramInstance::validate() const {
  const int n = num_vars();
  if (hessian.size() != n || lower.size() != n || upper.size() != n || eq_rows.cols() != n ||
      ineq_rows.cols() != n || eq_rhs.size() != eq_rows.rows() || ineq_rhs.size() != ineq_rows.rows())
    throw Error(ErrorCode::DimensionMismatch, "program dimensions are inconsistent");
  if (warm_start && warm_start->size() != n)
    throw Error(ErrorCode::DimensionMismatch, "warm start has the wrong dimension");
}

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
  }
  return "unknown";
}

KktReport check_kkt(const ProgramInstance& prog, const SolveOutcome& out, double tolerance) {
  KktReport r;
  const int n = prog.num_vars();
  const Vector& x = out.x;
  if (x.size() != n || out.eq_duals.size() != prog.num_eq() ||
      out.ineq_duals.size() != prog.num_ineq() || out.bound_duals.size() != n) {
    r.residual = kInf;
    return r;
  }
  Vector resid = prog.gradient(x) - out.bound_duals;
  if (prog.num_eq() > 0) resid -= prog.eq_rows.transpose() * out.eq_duals;
  if (prog.num_ineq() > 0) resid -= prog.ineq_rows.transpose() * out.ineq_duals;
  r.stationarity = n > 0 ? resid.cwiseAbs().maxCoeff() : 0.0;
  r.primal = prog.max_violation(x);

  for (int i = 0; i < prog.num_ineq(); ++i) {
    const double y = out.ineq_duals[i];
    r.dual = std::max(r.dual, -y);
    const double slack = prog.ineq_rows.row(i).dot(x) - prog.ineq_rhs[i];
    r.complementarity = std::max(r.complementarity, std::abs(y * slack));
  }
  for (int j = 0; j < n; ++j) {
    const double z = out.bound_duals[j];
    if (z > 0.0) {
      if (!std::isfinite(prog.lower[j])) r.dual = std::max(r.dual, z);
      else r.complementarity = std::max(r.complementarity, std::abs(z * (x[j] - prog.lower[j])));
    } else if (z < 0.0) {
      if (!std::isfinite(prog.upper[j])) r.dual = std::max(r.dual, -z);
      else r.complementarity = std::max(r.complementarity, std::abs(z * (prog.upper[j] - x[j])));
    }
  }
  r.residual = std::max({r.stationarity, r.primal, r.dual, r.complementarity});
  r.passed = r.residual <= tolerance * (1.0 + std::abs(out.objective));
  return r;
}

json program_to_json(const ProgramInstance& p) {
  json j;
  j["num_vars"] = p.num_vars();
  j["hessian"] = detail::matrix_to_json(p.hessian.to_dense());
  j["linear"] = detail::vector_to_json(p.linear);
  j["constant"] = p.constant;
  j["lower"] = detail::vector_to_json(p.lower);
  j["upper"] = detail::vector_to_json(p.upper);
  j["eq_rows"] = detail::matrix_to_json(p.eq_rows);
  j["eq_rhs"] = detail::vector_to_json(p.eq_rhs);
  j["ineq_rows"] = detail::matrix_to_json(p.ineq_rows);
  j["ineq_rhs"] = detail::vector_to_json(p.ineq_rhs);
  if (p.warm_start) j["warm_start"] = detail::vector_to_json(*p.warm_start);
  return j;
}

ProgramInstance program_from_json(const json& j) {
  try {
    const int n = j.at("num_vars").get<int>();
    ProgramInstance p = ProgramInstance::unconstrained(n);
    Matrix h = detail::matrix_from_json(j.at("hessian"), n);
    bool diag = true;
    for (int r = 0; r < h.rows() && diag; ++r)
      for (int c = 0; c < h.cols(); ++c)
        if (r != c && h(r, c) != 0.0) { diag = false; break; }
    p.hessian = diag ? QuadraticForm::diagonal(h.diagonal()) : QuadraticForm::dense(std::move(h));
    if (p.hessian.size() != n) p.hessian = QuadraticForm::zero(n);
    p.linear = detail::vector_from_json(j.at("linear"));
    p.constant = j.value("constant", 0.0);
    p.lower = detail::vector_from_json(j.at("lower"));
    p.upper = detail::vector_from_json(j.at("upper"));
    p.eq_rows = detail::matrix_from_json(j.at("eq_rows"), n);
    p.eq_rhs = detail::vector_from_json(j.at("eq_rhs"));
    p.ineq_rows = detail::matrix_from_json(j.at("ineq_rows"), n);
    p.ineq_rhs = detail::vector_from_json(j.at("ineq_rhs"));
    if (j.contains("warm_start")) p.warm_start = detail::vector_from_json(j["warm_start"]);
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
}

json outcome_to_json(const SolveOutcome& o) {
  json j;
  j["status"] = status_name(o.status);
  j["x"] = detail::vector_to_json(o.x);
  j["objective"] = o.objective;
  j["active_rows"] = o.active_rows;
  j["eq_duals"] = detail::vector_to_json(o.eq_duals);
  j["ineq_duals"] = detail::vector_to_json(o.ineq_duals);
  j["bound_duals"] = detail::vector_to_json(o.bound_duals);
  j["kkt_residual"] = o.kkt_residual;
  j["iterations"] = o.iterations;
  if (!o.detail.empty()) j["detail"] = o.detail;
  return j;
}

SolveOutcome outcome_from_json(const json& j) {
  try {
    SolveOutcome o;
    const auto s = j.at("status").get<std::string>();
    if (s == "optimal") o.status = SolveStatus::Optimal;
    else if (s == "infeasible") o.status = SolveStatus::Infeasible;
    else if (s == "unbounded") o.status = SolveStatus::Unbounded;
    else throw Error(ErrorCode::MalformedDocument, "unknown status '" + s + "'");
    o.x = detail::vector_from_json(j.at("x"));
    o.objective = j.at("objective").get<double>();
    o.active_rows = j.value("active_rows", std::vector<int>{});
    o.eq_duals = detail::vector_from_json(j.at("eq_duals"));
    o.ineq_duals = detail::vector_from_json(j.at("ineq_duals"));
    o.bound_duals = detail::vector_from_json(j.at("bound_duals"));
    o.kkt_residual = j.value("kkt_residual", 0.0);
    o.iterations = j.value("iterations", 0);
    o.detail = j.value("detail", std::string{});
    return o;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
}

}  // namespace cftree

// Two-phase bounded-variable primal simplex on a dense tableau.
//
// Standard form: every inequality row a'x >= b gets a surplus s >= 0 so that
// a'x - s = b; variables keep their own bounds (nonbasic at a bound, or at 0
// when free). Phase one starts from an all-artificial basis.

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "cftree/convex.hpp"
#include "cftree/error.hpp"

namespace cftree {
namespace {

enum class VarState : unsigned char { Basic, AtLower, AtUpper, Free };

class BoundedSimplex {
 public:
  BoundedSimplex(const ProgramInstance& prog, const SolverOptions& opts) : prog_(prog), opts_(opts) {
    prog.validate();
    if (!prog.hessian.is_zero())
      throw Error(ErrorCode::InvalidArgument, "solve_lp needs a zero quadratic term");
    build();
  }

  SolveOutcome run(bool phase_one_only) {
    SolveOutcome out;
    if (trivially_infeasible_) {
      out.status = SolveStatus::Infeasible;
      out.detail = "inconsistent zero row";
      return out;
    }
    // Phase one: minimize the sum of artificials.
    Vector phase1_cost = Vector::Zero(total_);
    phase1_cost.tail(m_).setOnes();
    set_costs(phase1_cost);
    const auto r1 = iterate(/*phase=*/1);
    (void)r1;  // phase one is bounded below by zero
    double worst = 0.0;
    for (int i = 0; i < m_; ++i) {
      const int k = basis_[static_cast<size_t>(i)];
      if (k >= N_) worst = std::max(worst, value_[k] / (1.0 + std::abs(b_[i])));
    }
    if (worst > opts_.feasibility_tol) {
      out.status = SolveStatus::Infeasible;
      out.iterations = iterations_;
      out.x = value_.head(n_);
      out.detail = "phase one optimum is positive";
      return out;
    }
    drive_out_artificials();
    for (int k = N_; k < total_; ++k) hi_[k] = 0.0;

    if (!phase_one_only) {
      Vector cost = Vector::Zero(total_);
      cost.head(n_) = prog_.linear;
      set_costs(cost);
      if (!iterate(/*phase=*/2)) {
        out.status = SolveStatus::Unbounded;
        out.iterations = iterations_;
        out.x = value_.head(n_);
        out.objective = -kInf;
        out.detail = "objective unbounded below";
        return out;
      }
    }
    finalize(out);
    return out;
  }

 private:
  void build() {
    n_ = prog_.num_vars();
    const int me = prog_.num_eq();
    const int mi = prog_.num_ineq();
    // Zero rows are checked and dropped; the rest are scaled to unit norm.
    for (int i = 0; i < me; ++i) {
      const double nrm = prog_.eq_rows.row(i).norm();
      if (nrm == 0.0) {
        if (std::abs(prog_.eq_rhs[i]) > opts_.feasibility_tol) trivially_infeasible_ = true;
        continue;
      }
      rows_.push_back({i, true, nrm});
    }
    for (int i = 0; i < mi; ++i) {
      const double nrm = prog_.ineq_rows.row(i).norm();
      if (nrm == 0.0) {
        if (prog_.ineq_rhs[i] > opts_.feasibility_tol) trivially_infeasible_ = true;
        continue;
      }
      rows_.push_back({i, false, nrm});
    }
    m_ = static_cast<int>(rows_.size());
    int surplus = 0;
    for (const auto& r : rows_)
      if (!r.equality) ++surplus;
    N_ = n_ + surplus;
    total_ = N_ + m_;

    A_ = RowMatrix::Zero(m_, N_);
    b_ = Vector(m_);
    lo_ = Vector(total_);
    hi_ = Vector(total_);
    lo_.head(n_) = prog_.lower;
    hi_.head(n_) = prog_.upper;
    int s = n_;
    for (int i = 0; i < m_; ++i) {
      const auto& r = rows_[static_cast<size_t>(i)];
      if (r.equality) {
        A_.row(i).head(n_) = prog_.eq_rows.row(r.source) / r.scale;
        b_[i] = prog_.eq_rhs[r.source] / r.scale;
      } else {
        A_.row(i).head(n_) = prog_.ineq_rows.row(r.source) / r.scale;
        b_[i] = prog_.ineq_rhs[r.source] / r.scale;
        A_(i, s) = -1.0;
        surplus_of_row_.push_back(s);
        lo_[s] = 0.0;
        hi_[s] = kInf;
        ++s;
        continue;
      }
      surplus_of_row_.push_back(-1);
    }
    for (int j = 0; j < n_; ++j)
      if (lo_[j] > hi_[j]) trivially_infeasible_ = true;

    value_ = Vector::Zero(total_);
    state_.assign(static_cast<size_t>(total_), VarState::AtLower);
    for (int j = 0; j < N_; ++j) {
      if (std::isfinite(lo_[j])) {
        value_[j] = lo_[j];
        state_[static_cast<size_t>(j)] = VarState::AtLower;
      } else if (std::isfinite(hi_[j])) {
        value_[j] = hi_[j];
        state_[static_cast<size_t>(j)] = VarState::AtUpper;
      } else {
        value_[j] = 0.0;
        state_[static_cast<size_t>(j)] = VarState::Free;
      }
    }
    // Artificials absorb the residual with a sign that keeps them nonnegative.
    const Vector resid = b_ - A_ * value_.head(N_);
    T_ = RowMatrix::Zero(m_, total_);
    art_sign_ = Vector(m_);
    basis_.resize(static_cast<size_t>(m_));
    for (int i = 0; i < m_; ++i) {
      const double sg = resid[i] >= 0.0 ? 1.0 : -1.0;
      art_sign_[i] = sg;
      T_.row(i).head(N_) = sg * A_.row(i);
      T_(i, N_ + i) = 1.0;
      const int k = N_ + i;
      lo_[k] = 0.0;
      hi_[k] = kInf;
      value_[k] = std::abs(resid[i]);
      state_[static_cast<size_t>(k)] = VarState::Basic;
      basis_[static_cast<size_t>(i)] = k;
    }
    const int limit = opts_.iteration_limit > 0 ? opts_.iteration_limit : 50 * (total_ + m_) + 100;
    iteration_limit_ = limit;
  }

  void set_costs(const Vector& cost) {
    cost_ = cost;
    Vector cb(m_);
    for (int i = 0; i < m_; ++i) cb[i] = cost_[basis_[static_cast<size_t>(i)]];
    d_ = cost_ - (cb.transpose() * T_).transpose();
    for (int i = 0; i < m_; ++i) d_[basis_[static_cast<size_t>(i)]] = 0.0;
  }

  // Returns false when the objective is unbounded.
  bool iterate(int phase) {
    bool bland = false;
    int degenerate = 0;
    const double dtol = opts_.optimality_tol;
    while (true) {
      if (++iterations_ > iteration_limit_)
        throw Error(ErrorCode::NumericalBreakdown, "simplex exceeded its pivot budget");
      // Pricing.
      int enter = -1;
      int dir = 0;
      double best = 0.0;
      const int price_end = phase == 1 ? total_ : N_;
      for (int j = 0; j < price_end; ++j) {
        const auto st = state_[static_cast<size_t>(j)];
        if (st == VarState::Basic || lo_[j] == hi_[j]) continue;
        const double dj = d_[j];
        int jd = 0;
        if ((st == VarState::AtLower || st == VarState::Free) && dj < -dtol) jd = 1;
        else if ((st == VarState::AtUpper || st == VarState::Free) && dj > dtol) jd = -1;
        if (jd == 0) continue;
        if (bland) {
          enter = j;
          dir = jd;
          break;
        }
        if (std::abs(dj) > best) {
          best = std::abs(dj);
          enter = j;
          dir = jd;
        }
      }
      if (enter < 0) return true;

      // Ratio test.
      double theta = (std::isfinite(lo_[enter]) && std::isfinite(hi_[enter])) ? hi_[enter] - lo_[enter]
                                                                                 : kInf;
      int leave = -1;
      double leave_alpha = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double alpha = dir * T_(i, enter);
        if (std::abs(alpha) <= kPivotTol) continue;
        const int k = basis_[static_cast<size_t>(i)];
        double t;
        if (alpha > 0.0) {
          if (!std::isfinite(lo_[k])) continue;
          t = std::max(0.0, (value_[k] - lo_[k]) / alpha);
        } else {
          if (!std::isfinite(hi_[k])) continue;
          t = std::max(0.0, (hi_[k] - value_[k]) / -alpha);
        }
        bool take = false;
        if (t < theta - kTieTol) take = true;
        else if (t <= theta + kTieTol && leave >= 0) {
          take = bland ? k < basis_[static_cast<size_t>(leave)] : std::abs(alpha) > std::abs(leave_alpha);
        }
        if (take) {
          theta = t;
          leave = i;
          leave_alpha = alpha;
        }
      }
      if (!std::isfinite(theta)) return false;

      if (theta <= kTieTol) {
        if (++degenerate > 3 * std::max(m_, 1)) bland = true;
      }

      const double delta = theta * dir;
      for (int i = 0; i < m_; ++i) value_[basis_[static_cast<size_t>(i)]] -= delta * T_(i, enter);
      value_[enter] += delta;

      if (leave < 0) {
        // Bound flip of the entering variable.
        if (dir > 0) {
          value_[enter] = hi_[enter];
          state_[static_cast<size_t>(enter)] = VarState::AtUpper;
        } else {
          value_[enter] = lo_[enter];
          state_[static_cast<size_t>(enter)] = VarState::AtLower;
        }
        continue;
      }
      const int out = basis_[static_cast<size_t>(leave)];
      if (leave_alpha > 0.0) {
        value_[out] = lo_[out];
        state_[static_cast<size_t>(out)] = VarState::AtLower;
      } else {
        value_[out] = hi_[out];
        state_[static_cast<size_t>(out)] = VarState::AtUpper;
      }
      if (out >= N_) hi_[out] = 0.0;  // artificials never re-enter
      pivot(leave, enter);
    }
  }

  void pivot(int r, int j) {
    const double piv = T_(r, j);
    T_.row(r) /= piv;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = T_(i, j);
      if (f != 0.0) T_.row(i) -= f * T_.row(r);
    }
    const double dj = d_[j];
    if (dj != 0.0) d_ -= dj * T_.row(r).transpose();
    d_[j] = 0.0;
    basis_[static_cast<size_t>(r)] = j;
    state_[static_cast<size_t>(j)] = VarState::Basic;
  }

  void drive_out_artificials() {
    for (int r = 0; r < m_; ++r) {
      const int k = basis_[static_cast<size_t>(r)];
      if (k < N_) continue;
      int best = -1;
      double mag = 1e-7;
      for (int j = 0; j < N_; ++j) {
        if (state_[static_cast<size_t>(j)] == VarState::Basic) continue;
        if (std::abs(T_(r, j)) > mag) {
          mag = std::abs(T_(r, j));
          best = j;
        }
      }
      // A row without any candidate is redundant; its artificial stays basic at zero.
      if (best < 0) continue;
      const double delta = value_[k] / T_(r, best);
      for (int i = 0; i < m_; ++i) value_[basis_[static_cast<size_t>(i)]] -= delta * T_(i, best);
      value_[best] += delta;
      value_[k] = 0.0;
      state_[static_cast<size_t>(k)] = VarState::AtLower;
      hi_[k] = 0.0;
      pivot(r, best);
    }
  }

  // Recomputes basic values and multipliers from the final basis.
  void finalize(SolveOutcome& out) {
    Matrix B(m_, m_);
    Vector cb(m_);
    for (int i = 0; i < m_; ++i) {
      const int k = basis_[static_cast<size_t>(i)];
      B.col(i) = column(k);
      cb[i] = cost_[k];
    }
    Vector rhs = b_;
    for (int j = 0; j < total_; ++j) {
      if (state_[static_cast<size_t>(j)] == VarState::Basic) continue;
      if (value_[j] != 0.0) rhs -= value_[j] * column(j);
    }
    Vector y = Vector::Zero(m_);
    if (m_ > 0) {
      Eigen::PartialPivLU<Matrix> lu(B);
      const Vector beta = lu.solve(rhs);
      if (beta.allFinite()) {
        for (int i = 0; i < m_; ++i) {
          const int k = basis_[static_cast<size_t>(i)];
          value_[k] = std::clamp(beta[i], lo_[k], hi_[k]);
        }
      }
      y = lu.transpose().solve(cb);
      if (!y.allFinite()) y.setZero();
    }
    const Vector x = value_.head(n_);
    out.status = SolveStatus::Optimal;
    out.x = x;
    out.objective = prog_.objective(x);
    out.iterations = iterations_;
    out.eq_duals = Vector::Zero(prog_.num_eq());
    out.ineq_duals = Vector::Zero(prog_.num_ineq());
    for (int i = 0; i < m_; ++i) {
      const auto& r = rows_[static_cast<size_t>(i)];
      if (r.equality) out.eq_duals[r.source] = y[i] / r.scale;
      else out.ineq_duals[r.source] = std::max(0.0, y[i]) / r.scale;
    }
    // Bound multipliers close stationarity exactly: z = c - A'y.
    Vector z = prog_.linear;
    if (prog_.num_eq() > 0) z -= prog_.eq_rows.transpose() * out.eq_duals;
    if (prog_.num_ineq() > 0) z -= prog_.ineq_rows.transpose() * out.ineq_duals;
    for (int j = 0; j < n_; ++j) {
      const bool at_lo = std::isfinite(lo_[j]) && std::abs(x[j] - lo_[j]) <= opts_.feasibility_tol * (1 + std::abs(lo_[j]));
      const bool at_hi = std::isfinite(hi_[j]) && std::abs(x[j] - hi_[j]) <= opts_.feasibility_tol * (1 + std::abs(hi_[j]));
      if ((z[j] > 0.0 && !at_lo) || (z[j] < 0.0 && !at_hi)) {
        // Rounding-level multiplier on an interior variable.
        if (std::abs(z[j]) <= 1e-9 * (1.0 + prog_.linear.cwiseAbs().maxCoeff())) z[j] = 0.0;
      }
    }
    out.bound_duals = z;
    for (int i = 0; i < prog_.num_ineq(); ++i) {
      const double slack = prog_.ineq_rows.row(i).dot(x) - prog_.ineq_rhs[i];
      if (std::abs(slack) <= 1e-9 * (1.0 + prog_.ineq_rows.row(i).norm())) out.active_rows.push_back(i);
    }
    out.kkt_residual = check_kkt(prog_, out).residual;
  }

  Vector column(int k) const {
    if (k < N_) return A_.col(k);
    Vector e = Vector::Zero(m_);
    e[k - N_] = art_sign_[k - N_];
    return e;
  }

  struct RowRef {
    int source;
    bool equality;
    double scale;
  };

  static constexpr double kPivotTol = 1e-9;
  static constexpr double kTieTol = 1e-12;

  const ProgramInstance& prog_;
  SolverOptions opts_;
  std::vector<RowRef> rows_;
  std::vector<int> surplus_of_row_;
  bool trivially_infeasible_ = false;
  int n_ = 0, m_ = 0, N_ = 0, total_ = 0;
  RowMatrix A_;
  Vector b_;
  Vector lo_, hi_;
  Vector cost_;
  RowMatrix T_;
  Vector d_;
  Vector value_;
  Vector art_sign_;
  std::vector<int> basis_;
  std::vector<VarState> state_;
  int iterations_ = 0;
  int iteration_limit_ = 0;
};

}  // namespace

SolveOutcome solve_lp(const ProgramInstance& prog, const SolverOptions& opts) {
  BoundedSimplex simplex(prog, opts);
  return simplex.run(/*phase_one_only=*/false);
}

std::optional<Vector> find_feasible_point(const ProgramInstance& prog, const SolverOptions& opts) {
  ProgramInstance lp = prog;
  lp.hessian = QuadraticForm::zero(prog.num_vars());
  lp.linear.setZero();
  BoundedSimplex simplex(lp, opts);
  auto out = simplex.run(/*phase_one_only=*/true);
  if (out.status != SolveStatus::Optimal) return std::nullopt;
  return out.x;
}

SolveOutcome solve_program(const ProgramInstance& prog, const SolverOptions& opts) {
  if (prog.hessian.is_zero()) return solve_lp(prog, opts);
  return solve_qp(prog, opts);
}

}  // namespace cftree

// Primal active-set method for convex quadratic programs.
//
// The working set holds every equality row, the inequality rows treated as
// equalities, and the variables pinned at one of their bounds. Steps are
// computed on the free variables only: by the range-space (Schur complement)
// formula when the free block of the hessian is positive definite, and by an
// explicit null-space basis otherwise (which also covers zero-curvature
// descent directions and unboundedness).

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "cftree/convex.hpp"
#include "cftree/error.hpp"

namespace cftree {
namespace {

enum class BoundState : signed char { Free = 0, Lower = -1, Upper = 1, Fixed = 2 };

class ActiveSetQp {
 public:
  ActiveSetQp(const ProgramInstance& prog, const SolverOptions& opts) : prog_(prog), opts_(opts) {
    prog.validate();
    n_ = prog.num_vars();
    for (int i = 0; i < prog.num_eq(); ++i) {
      const double nrm = prog.eq_rows.row(i).norm();
      eq_scale_.push_back(nrm);
    }
    for (int i = 0; i < prog.num_ineq(); ++i) {
      const double nrm = prog.ineq_rows.row(i).norm();
      in_scale_.push_back(nrm);
    }
    Aeq_ = prog.eq_rows;
    beq_ = prog.eq_rhs;
    for (int i = 0; i < prog.num_eq(); ++i)
      if (eq_scale_[static_cast<size_t>(i)] > 0) {
        Aeq_.row(i) /= eq_scale_[static_cast<size_t>(i)];
        beq_[i] /= eq_scale_[static_cast<size_t>(i)];
      }
    Ain_ = prog.ineq_rows;
    bin_ = prog.ineq_rhs;
    for (int i = 0; i < prog.num_ineq(); ++i)
      if (in_scale_[static_cast<size_t>(i)] > 0) {
        Ain_.row(i) /= in_scale_[static_cast<size_t>(i)];
        bin_[i] /= in_scale_[static_cast<size_t>(i)];
      }
    limit_ = opts.iteration_limit > 0 ? opts.iteration_limit
                                      : 50 * (n_ + prog.num_eq() + prog.num_ineq()) + 100;
  }

  SolveOutcome run() {
    SolveOutcome out;
    if (!start(out)) return out;

    bool at_face_min = false;
    while (true) {
      if (++iterations_ > limit_)
        throw Error(ErrorCode::IterationLimit, "active-set iteration limit reached");
      const bool bland = iterations_ > limit_ / 2;
      refresh_free();
      const Vector g = prog_.gradient(x_);
      Step step = at_face_min ? Step{} : compute_step(g);
      const double xscale = 1.0 + (n_ > 0 ? x_.cwiseAbs().maxCoeff() : 0.0);
      const bool stationary =
          at_face_min || (!step.descent && (step.p.size() == 0 || step.p.cwiseAbs().maxCoeff() <= 1e-13 * xscale));
      if (stationary) {
        Multipliers mult = multipliers(g);
        const double tol = opts_.optimality_tol * (1.0 + g.cwiseAbs().maxCoeff());
        // Most negative multiplier among droppable constraints.
        int drop_row = -1, drop_var = -1;
        double worst = -tol;
        for (size_t w = 0; w < work_.size(); ++w) {
          const double lam = mult.rows[static_cast<Eigen::Index>(prog_.num_eq() + static_cast<int>(w))];
          if (lam < worst || (bland && lam < -tol && drop_row < 0 && drop_var < 0)) {
            worst = lam;
            drop_row = static_cast<int>(w);
            drop_var = -1;
            if (bland) break;
          }
        }
        if (!(bland && drop_row >= 0)) {
          for (int j = 0; j < n_; ++j) {
            const auto st = bounds_[static_cast<size_t>(j)];
            if (st != BoundState::Lower && st != BoundState::Upper) continue;
            const double signed_mu = st == BoundState::Lower ? mult.bounds[j] : -mult.bounds[j];
            if (signed_mu < worst) {
              worst = signed_mu;
              drop_var = j;
              drop_row = -1;
              if (bland) break;
            }
          }
        }
        if (drop_row < 0 && drop_var < 0) {
          finish(out, mult);
          return out;
        }
        if (drop_row >= 0) work_.erase(work_.begin() + drop_row);
        else bounds_[static_cast<size_t>(drop_var)] = BoundState::Free;
        at_face_min = false;
        continue;
      }

      // Ratio test along p.
      double alpha = step.descent ? kInf : 1.0;
      int block_row = -1, block_var = -1;
      BoundState block_side = BoundState::Free;
      std::vector<char> in_work(static_cast<size_t>(prog_.num_ineq()), 0);
      for (int r : work_) in_work[static_cast<size_t>(r)] = 1;
      if (prog_.num_ineq() > 0) {
        const Vector ap = Ain_ * step.p;
        for (int i = 0; i < prog_.num_ineq(); ++i) {
          if (in_work[static_cast<size_t>(i)] || in_scale_[static_cast<size_t>(i)] == 0.0) continue;
          if (ap[i] >= -kDirTol) continue;
          const double slack = std::max(0.0, Ain_.row(i).dot(x_) - bin_[i]);
          const double t = slack / -ap[i];
          if (t < alpha || (t == alpha && block_row >= 0 && i < block_row)) {
            alpha = t;
            block_row = i;
            block_var = -1;
          }
        }
      }
      for (int j = 0; j < n_; ++j) {
        if (bounds_[static_cast<size_t>(j)] != BoundState::Free) continue;
        const double pj = step.p[j];
        double t = kInf;
        BoundState side = BoundState::Free;
        if (pj < -kDirTol * (1.0 + std::abs(x_[j])) && std::isfinite(prog_.lower[j])) {
          t = std::max(0.0, x_[j] - prog_.lower[j]) / -pj;
          side = BoundState::Lower;
        } else if (pj > kDirTol * (1.0 + std::abs(x_[j])) && std::isfinite(prog_.upper[j])) {
          t = std::max(0.0, prog_.upper[j] - x_[j]) / pj;
          side = BoundState::Upper;
        }
        if (t < alpha) {
          alpha = t;
          block_var = j;
          block_side = side;
          block_row = -1;
        }
      }
      if (!std::isfinite(alpha)) {
        out.status = SolveStatus::Unbounded;
        out.x = x_;
        out.objective = -kInf;
        out.iterations = iterations_;
        out.detail = "objective unbounded below along a zero-curvature direction";
        return out;
      }
      x_ += alpha * step.p;
      if (block_row >= 0) {
        work_.push_back(block_row);
        at_face_min = false;
      } else if (block_var >= 0) {
        bounds_[static_cast<size_t>(block_var)] = block_side;
        x_[block_var] = block_side == BoundState::Lower ? prog_.lower[block_var] : prog_.upper[block_var];
        at_face_min = false;
      } else {
        at_face_min = !step.descent;
      }
    }
  }

 private:
  struct Step {
    Vector p;
    bool descent = false;  // zero-curvature direction: no natural step length
  };

  struct Multipliers {
    Vector rows;    // equalities then working inequality rows (scaled rows)
    Vector bounds;  // per variable, meaningful where pinned
  };

  bool start(SolveOutcome& out) {
    for (int j = 0; j < n_; ++j)
      if (prog_.lower[j] > prog_.upper[j]) {
        out.status = SolveStatus::Infeasible;
        out.detail = "empty variable bounds";
        return false;
      }
    const double feas = opts_.feasibility_tol;
    bool have = false;
    if (prog_.warm_start) {
      Vector w = prog_.warm_start->cwiseMax(prog_.lower).cwiseMin(prog_.upper);
      if (violation(w) <= feas) {
        x_ = w;
        have = true;
      }
    }
    if (!have) {
      auto p = find_feasible_point(prog_, opts_);
      if (!p) {
        out.status = SolveStatus::Infeasible;
        out.detail = "phase one found no feasible point";
        return false;
      }
      x_ = *p;
    }
    bounds_.assign(static_cast<size_t>(n_), BoundState::Free);
    for (int j = 0; j < n_; ++j)
      if (prog_.lower[j] == prog_.upper[j]) {
        bounds_[static_cast<size_t>(j)] = BoundState::Fixed;
        x_[j] = prog_.lower[j];
      }
    // Keep an independent subset of the equality rows on the free variables.
    eq_active_.clear();
    refresh_free();
    if (prog_.num_eq() > 0) {
      Matrix AF(prog_.num_eq(), static_cast<Eigen::Index>(free_.size()));
      for (size_t c = 0; c < free_.size(); ++c) AF.col(static_cast<Eigen::Index>(c)) = Aeq_.col(free_[c]);
      std::vector<int> kept;
      Matrix basis(0, AF.cols());
      for (int i = 0; i < prog_.num_eq(); ++i) {
        if (eq_scale_[static_cast<size_t>(i)] == 0.0) continue;
        Matrix trial(basis.rows() + 1, AF.cols());
        trial << basis, AF.row(i);
        if (AF.cols() > 0) {
          Eigen::ColPivHouseholderQR<Matrix> qr(trial.transpose());
          qr.setThreshold(1e-10);
          if (qr.rank() == trial.rows()) {
            basis = trial;
            kept.push_back(i);
          }
        }
      }
      eq_active_ = kept;
    }
    return true;
  }

  double violation(const Vector& x) const {
    double v = 0.0;
    for (int j = 0; j < n_; ++j) v = std::max({v, prog_.lower[j] - x[j], x[j] - prog_.upper[j]});
    if (prog_.num_eq() > 0) v = std::max(v, (Aeq_ * x - beq_).cwiseAbs().maxCoeff());
    if (prog_.num_ineq() > 0) v = std::max(v, (bin_ - Ain_ * x).maxCoeff());
    return v;
  }

  void refresh_free() {
    free_.clear();
    for (int j = 0; j < n_; ++j)
      if (bounds_[static_cast<size_t>(j)] == BoundState::Free) free_.push_back(j);
  }

  // Working-set rows restricted to free columns.
  Matrix active_free_rows() const {
    const auto k = static_cast<Eigen::Index>(eq_active_.size() + work_.size());
    Matrix A(k, static_cast<Eigen::Index>(free_.size()));
    Eigen::Index r = 0;
    for (int i : eq_active_) {
      for (size_t c = 0; c < free_.size(); ++c) A(r, static_cast<Eigen::Index>(c)) = Aeq_(i, free_[c]);
      ++r;
    }
    for (int i : work_) {
      for (size_t c = 0; c < free_.size(); ++c) A(r, static_cast<Eigen::Index>(c)) = Ain_(i, free_[c]);
      ++r;
    }
    return A;
  }

  // Free block of the hessian; true when it is numerically positive definite.
  bool free_hessian_pd(Matrix* hff, Vector* hdiag) {
    const auto nf = static_cast<Eigen::Index>(free_.size());
    const auto& H = prog_.hessian;
    if (H.kind() == QuadraticForm::Kind::Zero) return false;
    if (H.kind() == QuadraticForm::Kind::Diagonal) {
      hdiag->resize(nf);
      for (Eigen::Index c = 0; c < nf; ++c) (*hdiag)[c] = H.diag()[free_[static_cast<size_t>(c)]];
      if (nf == 0) return true;
      const double mx = hdiag->maxCoeff();
      return mx > 0.0 && hdiag->minCoeff() > 1e-12 * mx;
    }
    hff->resize(nf, nf);
    for (Eigen::Index r = 0; r < nf; ++r)
      for (Eigen::Index c = 0; c < nf; ++c)
        (*hff)(r, c) = H.dense_matrix()(free_[static_cast<size_t>(r)], free_[static_cast<size_t>(c)]);
    if (nf == 0) return true;
    if (!ldlt_valid_ || cached_free_ != free_) {
      ldlt_.compute(*hff);
      cached_free_ = free_;
      ldlt_valid_ = true;
    }
    if (ldlt_.info() != Eigen::Success) return false;
    const Vector d = ldlt_.vectorD();
    const double mx = d.cwiseAbs().maxCoeff();
    return mx > 0.0 && d.minCoeff() > 1e-12 * mx;
  }

  Step compute_step(const Vector& g) {
    Step s;
    s.p = Vector::Zero(n_);
    const auto nf = static_cast<Eigen::Index>(free_.size());
    if (nf == 0) return s;
    Vector gf(nf);
    for (Eigen::Index c = 0; c < nf; ++c) gf[c] = g[free_[static_cast<size_t>(c)]];
    const Matrix A = active_free_rows();
    Matrix hff;
    Vector hdiag;
    Vector pf;
    if (free_hessian_pd(&hff, &hdiag)) {
      auto hsolve = [&](const Matrix& rhs) -> Matrix {
        if (prog_.hessian.kind() == QuadraticForm::Kind::Diagonal)
          return hdiag.cwiseInverse().asDiagonal() * rhs;
        return ldlt_.solve(rhs);
      };
      const Vector v = hsolve(gf);
      if (A.rows() == 0) {
        pf = -v;
      } else {
        const Matrix Y = hsolve(A.transpose());
        const Matrix M = A * Y;
        const Vector lam = M.ldlt().solve(A * v);
        pf = -v + Y * lam;
      }
    } else {
      pf = null_space_step(A, gf, hff, hdiag, &s.descent);
    }
    for (Eigen::Index c = 0; c < nf; ++c) s.p[free_[static_cast<size_t>(c)]] = pf[c];
    return s;
  }

  Vector null_space_step(const Matrix& A, const Vector& gf, Matrix hff, const Vector& hdiag, bool* descent) {
    const auto nf = gf.size();
    Matrix Z;
    if (A.rows() == 0) {
      Z = Matrix::Identity(nf, nf);
    } else {
      Eigen::ColPivHouseholderQR<Matrix> qr(A.transpose());
      qr.setThreshold(1e-10);
      const auto rank = qr.rank();
      const Matrix Q = qr.householderQ() * Matrix::Identity(nf, nf);
      Z = Q.rightCols(nf - rank);
    }
    if (Z.cols() == 0) return Vector::Zero(nf);
    if (prog_.hessian.kind() == QuadraticForm::Kind::Diagonal) hff = hdiag.asDiagonal();
    else if (prog_.hessian.kind() == QuadraticForm::Kind::Zero) hff = Matrix::Zero(nf, nf);
    const Vector r = Z.transpose() * gf;
    const Matrix R = Z.transpose() * hff * Z;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (R + R.transpose()));
    const Vector& lam = eig.eigenvalues();
    const Matrix& V = eig.eigenvectors();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    const Vector rv = V.transpose() * r;
    const double gtol = 1e-11 * (1.0 + gf.cwiseAbs().maxCoeff());
    Vector d = Vector::Zero(rv.size());
    bool zero_curv = false;
    for (Eigen::Index i = 0; i < rv.size(); ++i) {
      if (lam[i] <= 1e-10 * scale && std::abs(rv[i]) > gtol) {
        d[i] = -rv[i];
        zero_curv = true;
      }
    }
    if (!zero_curv) {
      for (Eigen::Index i = 0; i < rv.size(); ++i)
        if (lam[i] > 1e-10 * scale) d[i] = -rv[i] / lam[i];
    }
    *descent = zero_curv;
    return Z * (V * d);
  }

  Multipliers multipliers(const Vector& g) const {
    Multipliers m;
    const auto k = static_cast<Eigen::Index>(eq_active_.size() + work_.size());
    const auto nf = static_cast<Eigen::Index>(free_.size());
    Vector lam_w = Vector::Zero(k);
    if (k > 0 && nf > 0) {
      const Matrix A = active_free_rows();
      Vector gf(nf);
      for (Eigen::Index c = 0; c < nf; ++c) gf[c] = g[free_[static_cast<size_t>(c)]];
      lam_w = A.transpose().colPivHouseholderQr().solve(gf);
    }
    // Map back to the layout [all equality rows, working rows].
    m.rows = Vector::Zero(prog_.num_eq() + static_cast<Eigen::Index>(work_.size()));
    Eigen::Index r = 0;
    for (int i : eq_active_) m.rows[i] = lam_w[r++];
    for (size_t w = 0; w < work_.size(); ++w) m.rows[prog_.num_eq() + static_cast<Eigen::Index>(w)] = lam_w[r++];
    // Bound multipliers close stationarity on pinned variables.
    Vector resid = g;
    for (int i = 0; i < prog_.num_eq(); ++i)
      if (m.rows[i] != 0.0) resid -= m.rows[i] * Aeq_.row(i).transpose();
    for (size_t w = 0; w < work_.size(); ++w)
      resid -= m.rows[prog_.num_eq() + static_cast<Eigen::Index>(w)] * Ain_.row(work_[w]).transpose();
    m.bounds = Vector::Zero(n_);
    for (int j = 0; j < n_; ++j)
      if (bounds_[static_cast<size_t>(j)] != BoundState::Free) m.bounds[j] = resid[j];
    return m;
  }

  void finish(SolveOutcome& out, const Multipliers& mult) {
    out.status = SolveStatus::Optimal;
    out.x = x_;
    out.objective = prog_.objective(x_);
    out.iterations = iterations_;
    out.eq_duals = Vector::Zero(prog_.num_eq());
    out.ineq_duals = Vector::Zero(prog_.num_ineq());
    for (int i = 0; i < prog_.num_eq(); ++i)
      if (eq_scale_[static_cast<size_t>(i)] > 0) out.eq_duals[i] = mult.rows[i] / eq_scale_[static_cast<size_t>(i)];
    for (size_t w = 0; w < work_.size(); ++w) {
      const int i = work_[w];
      out.ineq_duals[i] = std::max(0.0, mult.rows[prog_.num_eq() + static_cast<Eigen::Index>(w)]) /
                          in_scale_[static_cast<size_t>(i)];
    }
    out.bound_duals = Vector::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      const auto st = bounds_[static_cast<size_t>(j)];
      if (st == BoundState::Fixed) out.bound_duals[j] = mult.bounds[j];
      else if (st == BoundState::Lower) out.bound_duals[j] = std::max(0.0, mult.bounds[j]);
      else if (st == BoundState::Upper) out.bound_duals[j] = std::min(0.0, mult.bounds[j]);
    }
    out.active_rows = work_;
    std::sort(out.active_rows.begin(), out.active_rows.end());
    out.kkt_residual = check_kkt(prog_, out).residual;
  }

  static constexpr double kDirTol = 1e-12;

  const ProgramInstance& prog_;
  SolverOptions opts_;
  int n_ = 0;
  RowMatrix Aeq_, Ain_;
  Vector beq_, bin_;
  std::vector<double> eq_scale_, in_scale_;
  Vector x_;
  std::vector<BoundState> bounds_;
  std::vector<int> free_;
  std::vector<int> eq_active_;
  std::vector<int> work_;
  int iterations_ = 0;
  int limit_ = 0;
  Eigen::LDLT<Matrix> ldlt_;
  bool ldlt_valid_ = false;
  std::vector<int> cached_free_;
};

}  // namespace

SolveOutcome solve_qp(const ProgramInstance& prog, const SolverOptions& opts) {
  ActiveSetQp qp(prog, opts);
  return qp.run();
}

}  // namespace cftree

#include <random>

#include <Eigen/LU>

#include "doctest.h"

#include "cftree/convex.hpp"
#include "cftree/error.hpp"

using namespace cftree;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// min |x - center|^2 in the 1/2 x'Hx + c'x form.
ProgramInstance l2_projection(const Vector& center) {
  auto p = ProgramInstance::unconstrained(static_cast<int>(center.size()));
  p.hessian = QuadraticForm::diagonal(Vector::Constant(center.size(), 2.0));
  p.linear = -2.0 * center;
  p.constant = center.squaredNorm();
  return p;
}

// Exhaustive active-set enumeration for tiny dense QPs with rows only.
double enumerate_kkt(const Matrix& H, const Vector& c, double constant, const Matrix& A,
                     const Vector& b) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(H.rows());
  double best = kInf;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int r = 0; r < m; ++r)
      if (mask & (1 << r)) act.push_back(r);
    const int k = static_cast<int>(act.size());
    Matrix K = Matrix::Zero(n + k, n + k);
    Vector rhs(n + k);
    K.topLeftCorner(n, n) = H;
    rhs.head(n) = -c;
    for (int i = 0; i < k; ++i) {
      K.block(0, n + i, n, 1) = -A.row(act[i]).transpose();
      K.block(n + i, 0, 1, n) = A.row(act[i]);
      rhs[n + i] = b[act[i]];
    }
    Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible()) continue;
    Vector sol = lu.solve(rhs);
    Vector x = sol.head(n);
    if (((A * x - b).array() < -1e-9).any()) continue;
    if ((sol.tail(k).array() < -1e-9).any()) continue;
    best = std::min(best, 0.5 * x.dot(H * x) + c.dot(x) + constant);
  }
  return best;
}

}  // namespace

TEST_CASE("median_clip clamps to the interval") {
  CHECK(median_clip(5, 0, 10) == 5);
  CHECK(median_clip(-3, 0, 10) == 0);
  CHECK(median_clip(12, 0, 10) == 10);
  CHECK(median_clip(4, -kInf, kInf) == 4);
  CHECK_THROWS_AS(median_clip(1, 2, 1), Error);
}

TEST_CASE("separable solve") {
  SUBCASE("box clamp") {
    SeparableCost cost{Vector(), Vector::Ones(2)};
    auto out = solve_separable(vec({-2, 0}), vec({0, 1}), vec({kInf, kInf}), cost, {});
    REQUIRE(out.optimal());
    CHECK(out.x[0] == 0.0);
    CHECK(out.x[1] == 1.0);
    CHECK(out.objective == doctest::Approx(5.0));
  }
  SUBCASE("pinned coordinate") {
    SeparableCost cost{Vector(), Vector::Ones(1)};
    auto out = solve_separable(vec({3}), vec({3}), vec({3}), cost, {});
    CHECK(out.x[0] == 3.0);
    CHECK(out.objective == 0.0);
  }
  SUBCASE("categorical block with an inadmissible category") {
    SeparableCost cost{Vector::Ones(3), Vector()};
    SeparableBlock blk{0, 3, {true, true, false}};
    // source is red; make red inadmissible by the box so green/blue compete
    auto out = solve_separable(vec({1, 0, 0}), vec({0, 0, 0}), vec({0, 1, 1}), cost, {blk});
    REQUIRE(out.optimal());
    CHECK(out.x[1] == 1.0);
    CHECK(out.objective == doctest::Approx(2.0));
  }
  SUBCASE("no admissible category") {
    SeparableCost cost{Vector::Ones(2), Vector()};
    SeparableBlock blk{0, 2, {false, false}};
    auto out = solve_separable(vec({1, 0}), vec({0, 0}), vec({1, 1}), cost, {blk});
    CHECK(out.status == SolveStatus::Infeasible);
  }
}

TEST_CASE("lp basics") {
  SUBCASE("single bound") {
    auto p = ProgramInstance::unconstrained(1);
    p.linear = vec({1});
    p.lower = vec({3});
    auto out = solve_lp(p);
    REQUIRE(out.optimal());
    CHECK(out.x[0] == doctest::Approx(3.0));
    CHECK(check_kkt(p, out).passed);
  }
  SUBCASE("single row") {
    auto p = ProgramInstance::unconstrained(1);
    p.linear = vec({1});
    p.add_ineq(vec({1}), 3);
    auto out = solve_lp(p);
    REQUIRE(out.optimal());
    CHECK(out.x[0] == doctest::Approx(3.0));
    CHECK(check_kkt(p, out).passed);
  }
  SUBCASE("unbounded") {
    auto p = ProgramInstance::unconstrained(1);
    p.linear = vec({-1});
    p.lower = vec({0});
    CHECK(solve_lp(p).status == SolveStatus::Unbounded);
  }
  SUBCASE("infeasible") {
    auto p = ProgramInstance::unconstrained(2);
    p.add_ineq(vec({1, 1}), 2);
    p.add_ineq(vec({-1, -1}), -1);
    CHECK(solve_lp(p).status == SolveStatus::Infeasible);
  }
  SUBCASE("l1 reformulation") {
    // variables (d1, d2, t1, t2): min t1 + t2, t - d >= 0, t + d >= 0, d1 + d2 >= 2
    auto p = ProgramInstance::unconstrained(4);
    p.linear = vec({0, 0, 1, 1});
    p.add_ineq(vec({-1, 0, 1, 0}), 0);
    p.add_ineq(vec({0, -1, 0, 1}), 0);
    p.add_ineq(vec({1, 0, 1, 0}), 0);
    p.add_ineq(vec({0, 1, 0, 1}), 0);
    p.add_ineq(vec({1, 1, 0, 0}), 2);
    auto out = solve_lp(p);
    REQUIRE(out.optimal());
    CHECK(out.objective == doctest::Approx(2.0));
    CHECK(out.x[0] + out.x[1] >= 2.0 - 1e-9);
    CHECK(check_kkt(p, out).passed);
  }
}

TEST_CASE("qp basics") {
  SUBCASE("halfspace projection") {
    auto p = l2_projection(vec({0, 0}));
    p.add_ineq(vec({1, 1}), 2);
    auto out = solve_qp(p);
    REQUIRE(out.optimal());
    CHECK(out.x[0] == doctest::Approx(1.0));
    CHECK(out.x[1] == doctest::Approx(1.0));
    CHECK(out.objective == doctest::Approx(2.0));
    CHECK(check_kkt(p, out).passed);
  }
  SUBCASE("box projection") {
    auto p = l2_projection(vec({3, 0}));
    p.upper[0] = 1;
    p.lower[1] = 0;
    auto out = solve_qp(p);
    REQUIRE(out.optimal());
    CHECK(out.x[0] == doctest::Approx(1.0));
    CHECK(out.x[1] == doctest::Approx(0.0));
    CHECK(out.objective == doctest::Approx(4.0));
    CHECK(check_kkt(p, out).passed);
  }
  SUBCASE("three rows against the enumeration oracle") {
    auto p = l2_projection(vec({2, 2}));
    p.add_ineq(vec({-1, -1}), -2);
    p.add_ineq(vec({1, 0}), 0);
    p.add_ineq(vec({0, 1}), 0);
    p.add_ineq(vec({1, -1}), 0.5);
    auto out = solve_qp(p);
    REQUIRE(out.optimal());
    CHECK(out.x[0] == doctest::Approx(1.25));
    CHECK(out.x[1] == doctest::Approx(0.75));
    const double oracle = enumerate_kkt(p.hessian.to_dense(), p.linear, p.constant,
                                        Matrix(p.ineq_rows), p.ineq_rhs);
    CHECK(out.objective == doctest::Approx(oracle).epsilon(1e-10));
    CHECK(check_kkt(p, out).passed);
  }
  SUBCASE("equality rows") {
    auto p = l2_projection(vec({0, 0, 0}));
    p.add_eq(vec({1, 1, 1}), 3);
    auto out = solve_qp(p);
    REQUIRE(out.optimal());
    CHECK(out.objective == doctest::Approx(3.0));
    CHECK(check_kkt(p, out).passed);
  }
  SUBCASE("infeasible") {
    auto p = l2_projection(vec({0, 0}));
    p.add_ineq(vec({1, 0}), 1);
    p.add_ineq(vec({-1, 0}), 0);
    CHECK(solve_qp(p).status == SolveStatus::Infeasible);
  }
  SUBCASE("semidefinite hessian with a linear direction") {
    // min x1^2 - x2 with x2 <= 1 -> x2 = 1, objective -1
    auto p = ProgramInstance::unconstrained(2);
    p.hessian = QuadraticForm::diagonal(vec({2, 0}));
    p.linear = vec({0, -1});
    p.upper[1] = 1;
    auto out = solve_qp(p);
    REQUIRE(out.optimal());
    CHECK(out.objective == doctest::Approx(-1.0));
    CHECK(check_kkt(p, out).passed);
    p.upper[1] = kInf;
    CHECK(solve_qp(p).status == SolveStatus::Unbounded);
  }
}

TEST_CASE("random polytope projections agree with enumeration, warm and cold") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 3;
    const int m = 2 + trial % 5;
    Vector center(n);
    for (int i = 0; i < n; ++i) center[i] = 2.0 * g(rng);
    auto p = l2_projection(center);
    for (int r = 0; r < m; ++r) {
      Vector a(n);
      for (int i = 0; i < n; ++i) a[i] = g(rng);
      // rows pass near the origin so the origin region is nonempty
      p.add_ineq(a, -std::abs(g(rng)));
    }
    const double oracle = enumerate_kkt(p.hessian.to_dense(), p.linear, p.constant,
                                        Matrix(p.ineq_rows), p.ineq_rhs);
    auto cold = solve_qp(p);
    REQUIRE(cold.optimal());
    CHECK(cold.objective == doctest::Approx(oracle).epsilon(1e-8));
    CHECK(check_kkt(p, cold).passed);
    p.warm_start = Vector::Zero(n);
    auto warm = solve_qp(p);
    REQUIRE(warm.optimal());
    CHECK(std::abs(warm.objective - cold.objective) <= 1e-9 * (1 + std::abs(cold.objective)));
  }
}

TEST_CASE("linear programs agree through both solvers") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 4;
    auto p = ProgramInstance::unconstrained(n);
    for (int i = 0; i < n; ++i) {
      p.linear[i] = u(rng);
      p.lower[i] = -1 - u(rng) * 0.5;
      p.upper[i] = 1 + u(rng) * 0.5;
    }
    for (int r = 0; r < 3; ++r) {
      Vector a(n);
      for (int i = 0; i < n; ++i) a[i] = u(rng);
      p.add_ineq(a, -0.2);
    }
    auto lp = solve_lp(p);
    auto qp = solve_qp(p);
    REQUIRE(lp.optimal());
    REQUIRE(qp.optimal());
    CHECK(std::abs(lp.objective - qp.objective) <= 1e-9);
    CHECK(check_kkt(p, lp).passed);
    CHECK(check_kkt(p, qp).passed);
  }
}

TEST_CASE("median formula matches the one-dimensional qp") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double c = u(rng);
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    auto p = l2_projection(Vector::Constant(1, c));
    p.lower[0] = lo;
    p.upper[0] = hi;
    auto out = solve_qp(p);
    REQUIRE(out.optimal());
    CHECK(std::abs(out.x[0] - median_clip(c, lo, hi)) <= 1e-10);
  }
}

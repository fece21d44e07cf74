#include <fstream>
#include <random>

#include "doctest.h"

#include <nlohmann/json.hpp>

#include "cftree/fixtures.hpp"
#include "cftree/mixed_integer.hpp"
#include "test_util.hpp"

using namespace cftree;
using nlohmann::json;
using testutil::vec;

namespace {

RoundingFixture load_fixture(const std::string& name) {
  std::ifstream in(std::string(CFTREE_FIXTURE_DIR) + "/" + name);
  REQUIRE(in.good());
  return rounding_fixture_from_json(json::parse(in));
}

struct MixedProblem {
  ProgramInstance prog;
  std::vector<int> integrality;
  std::vector<CoordRange> blocks;
};

// `cont` free coordinates followed by one-hot blocks of the given sizes; a
// dense PSD cost and rows satisfied by one random assignment.
MixedProblem random_problem(std::mt19937_64& rng, int cont, const std::vector<int>& sizes, int rows) {
  std::normal_distribution<double> g;
  int n = cont;
  MixedProblem m;
  for (int s : sizes) {
    m.blocks.push_back({n, s});
    n += s;
  }
  Matrix B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = g(rng);
  m.prog = ProgramInstance::unconstrained(n);
  m.prog.hessian = QuadraticForm::dense(B * B.transpose() / n + 0.1 * Matrix::Identity(n, n));
  for (int d = 0; d < n; ++d) m.prog.linear[d] = 2 * g(rng);
  Vector feasible = Vector::Zero(n);
  for (int d = 0; d < cont; ++d) {
    feasible[d] = g(rng);
    m.prog.lower[d] = -5;
    m.prog.upper[d] = 5;
  }
  for (const auto& b : m.blocks) {
    Vector ones = Vector::Zero(n);
    ones.segment(b.offset, b.size).setOnes();
    m.prog.add_eq(ones, 1.0);
    feasible[b.offset + static_cast<int>(rng() % static_cast<unsigned>(b.size))] = 1.0;
    for (int d = b.offset; d < b.offset + b.size; ++d) {
      m.prog.lower[d] = 0;
      m.prog.upper[d] = 1;
      m.integrality.push_back(d);
    }
  }
  for (int r = 0; r < rows; ++r) {
    const Vector a = Vector::NullaryExpr(n, [&] { return g(rng); });
    m.prog.add_ineq(a, a.dot(feasible) - std::abs(g(rng)));
  }
  return m;
}

void check_incumbent(const MixedProblem& m, const MixedResult& r) {
  REQUIRE(r.outcome.optimal());
  CHECK(m.prog.max_violation(r.outcome.x) <= 1e-9);
  for (int d : m.integrality) CHECK((r.outcome.x[d] == 0.0 || r.outcome.x[d] == 1.0));
  CHECK(r.bound_violations == 0);
  CHECK_FALSE(r.budget_exceeded);
}

}  // namespace

TEST_CASE("integral relaxation needs no branching") {
  // center sits on a vertex of the simplex, so the relaxation lands there
  MixedProblem m;
  m.prog = ProgramInstance::unconstrained(4);
  const Vector center = vec({0.5, 0, 1, 0});
  m.prog.hessian = QuadraticForm::diagonal(Vector::Constant(4, 2.0));
  m.prog.linear = -2 * center;
  m.prog.constant = center.squaredNorm();
  m.prog.add_eq(vec({0, 1, 1, 1}), 1.0);
  for (int d = 1; d < 4; ++d) {
    m.prog.lower[d] = 0;
    m.prog.upper[d] = 1;
  }
  m.integrality = {1, 2, 3};
  m.blocks = {{1, 3}};
  const auto r = solve_mixed(m.prog, m.integrality, m.blocks);
  check_incumbent(m, r);
  CHECK(r.nodes == 1);
  CHECK(r.outcome.objective == doctest::Approx(0.0).scale(1));
  CHECK(r.outcome.x == center);

  const auto rr = relax_and_round(m.prog, m.integrality, m.blocks);
  CHECK(rr.feasible);
  CHECK(rr.objective == doctest::Approx(r.outcome.objective).scale(1));
  CHECK(rr.x == r.outcome.x);
}

TEST_CASE("a row leaving one feasible category") {
  // x = (c, z1, z2, z3) with |c| <= 2; 0.2 c - z1 + z2 - z3 >= 0.1 admits only z2 = 1
  MixedProblem m;
  m.prog = ProgramInstance::unconstrained(4);
  const Vector center = vec({0.3, 1, 0, 0});
  m.prog.hessian = QuadraticForm::diagonal(Vector::Constant(4, 2.0));
  m.prog.linear = -2 * center;
  m.prog.constant = center.squaredNorm();
  m.prog.add_eq(vec({0, 1, 1, 1}), 1.0);
  m.prog.add_ineq(vec({0.2, -1, 1, -1}), 0.1);
  m.prog.lower[0] = -2;
  m.prog.upper[0] = 2;
  for (int d = 1; d < 4; ++d) {
    m.prog.lower[d] = 0;
    m.prog.upper[d] = 1;
  }
  m.integrality = {1, 2, 3};
  m.blocks = {{1, 3}};
  const auto r = solve_mixed(m.prog, m.integrality, m.blocks);
  check_incumbent(m, r);
  CHECK(r.outcome.x[2] == 1.0);

  // each category pinned by hand
  double best = kInf;
  for (int c = 0; c < 3; ++c) {
    ProgramInstance p = m.prog;
    for (int k = 0; k < 3; ++k) p.lower[1 + k] = p.upper[1 + k] = k == c ? 1.0 : 0.0;
    const auto o = solve_program(p);
    if (o.optimal()) best = std::min(best, o.objective);
    CHECK(o.optimal() == (c == 1));
  }
  CHECK(r.outcome.objective == doctest::Approx(best).epsilon(1e-12));
  CHECK(enumerate_assignments(m.prog, m.integrality, m.blocks).objective ==
        doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("two blocks against all twelve assignments") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = random_problem(rng, 2, {3, 4}, 3);
    const auto r = solve_mixed(m.prog, m.integrality, m.blocks);
    double best = kInf;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 4; ++b) {
        ProgramInstance p = m.prog;
        for (int k = 0; k < 3; ++k) p.lower[2 + k] = p.upper[2 + k] = k == a ? 1.0 : 0.0;
        for (int k = 0; k < 4; ++k) p.lower[5 + k] = p.upper[5 + k] = k == b ? 1.0 : 0.0;
        const auto o = solve_program(p);
        if (o.optimal()) best = std::min(best, o.objective);
      }
    REQUIRE(std::isfinite(best));
    check_incumbent(m, r);
    CHECK(std::abs(r.outcome.objective - best) <= 1e-8);
  }
}

TEST_CASE("branch-and-bound matches enumeration on random problems") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<int> sizes;
    int total = 0;
    while (total < 6 || (rng() % 3 != 0 && total < 12)) {
      const int s = 2 + static_cast<int>(rng() % 3);
      if (total + s > 16) break;
      sizes.push_back(s);
      total += s;
    }
    const auto m = random_problem(rng, 1 + static_cast<int>(rng() % 3), sizes, 2 + static_cast<int>(rng() % 3));
    const auto r = solve_mixed(m.prog, m.integrality, m.blocks);
    const auto e = enumerate_assignments(m.prog, m.integrality, m.blocks);
    REQUIRE(e.optimal());
    check_incumbent(m, r);
    CHECK(std::abs(r.outcome.objective - e.objective) <= 1e-8);
    CHECK(check_kkt(r.pinned, r.outcome).passed);
  }
}

TEST_CASE("infeasible integer problem") {
  // one block of two; a row needs both dummies at once
  MixedProblem m;
  m.prog = ProgramInstance::unconstrained(2);
  m.prog.hessian = QuadraticForm::diagonal(Vector::Constant(2, 2.0));
  m.prog.add_eq(vec({1, 1}), 1.0);
  m.prog.add_ineq(vec({1, 0}), 0.4);
  m.prog.add_ineq(vec({0, 1}), 0.4);
  for (int d = 0; d < 2; ++d) {
    m.prog.lower[d] = 0;
    m.prog.upper[d] = 1;
  }
  const auto r = solve_mixed(m.prog, {0, 1}, {{0, 2}});
  CHECK(r.outcome.status == SolveStatus::Infeasible);
  const auto rr = relax_and_round(m.prog, {0, 1}, {{0, 2}});
  CHECK(rr.relaxation.optimal());
  CHECK_FALSE(rr.feasible);
}

TEST_CASE("node budget") {
  std::mt19937_64 rng(5);
  const auto m = random_problem(rng, 2, {4, 4, 4}, 4);
  MixedOptions opts;
  opts.node_budget = 2;
  const auto r = solve_mixed(m.prog, m.integrality, m.blocks, opts);
  const auto full = solve_mixed(m.prog, m.integrality, m.blocks);
  if (full.nodes > 2) {
    CHECK(r.budget_exceeded);
    CHECK(r.bound_gap >= 0.0);
    CHECK(r.nodes <= 2);
  }
}

TEST_CASE("frozen rounding fixtures") {
  SUBCASE("rounding leaves the polytope") {
    const auto f = load_fixture("rounding_infeasible.json");
    const auto rr = relax_and_round(f.program, f.integrality, f.blocks);
    CHECK(rr.relaxation.optimal());
    CHECK_FALSE(rr.feasible);
    const auto exact = solve_mixed(f.program, f.integrality, f.blocks);
    CHECK(exact.outcome.optimal());
    CHECK(f.program.max_violation(exact.outcome.x) <= 1e-9);
  }
  SUBCASE("rounding is feasible but worse") {
    const auto f = load_fixture("rounding_suboptimal.json");
    const auto rr = relax_and_round(f.program, f.integrality, f.blocks);
    const auto exact = solve_mixed(f.program, f.integrality, f.blocks);
    REQUIRE(exact.outcome.optimal());
    CHECK(rr.feasible);
    CHECK(rr.objective > exact.outcome.objective + 1e-6);
    CHECK(std::abs(exact.outcome.objective - enumerate_assignments(f.program, f.integrality, f.blocks).objective) <=
          1e-8);
  }
  SUBCASE("fixtures are reproducible from their seed") {
    const auto f = load_fixture("rounding_infeasible.json");
    const auto again = find_rounding_fixture(RoundingPitfall::Infeasible, f.seed);
    CHECK(rounding_fixture_to_json(again) == rounding_fixture_to_json(f));
  }
}

#include <random>
#include <set>

#include "doctest.h"

#include <nlohmann/json.hpp>

#include "cftree/fixtures.hpp"
#include "test_util.hpp"

using namespace cftree;
using nlohmann::json;
using testutil::code_of;
using testutil::vec;

namespace {

SyntheticDataset one_dim(std::vector<double> xs, std::vector<ClassLabel> ys) {
  SyntheticDataset d;
  d.schema = FeatureSchema::continuous(1, 2);
  for (double x : xs) d.rows.push_back(vec({x}));
  d.labels = std::move(ys);
  return d;
}

ConstraintSet open_set(int D) {
  ConstraintSet cs;
  cs.dim = D;
  cs.lower = Vector::Constant(D, -kInf);
  cs.upper = Vector::Constant(D, kInf);
  cs.frozen.assign(static_cast<size_t>(D), false);
  cs.upper_strict.assign(static_cast<size_t>(D), false);
  return cs;
}

}  // namespace

TEST_CASE("trainer") {
  SUBCASE("two clusters on a line") {
    const auto t = train_axis_aligned(one_dim({-2, -1.5, -0.5, -0.1, 1.2, 1.5, 2, 3}, {1, 1, 1, 1, 2, 2, 2, 2}), 4);
    CHECK(t.leaves().size() == 2);
    const auto& root = t.node(t.root());
    CHECK(root.feature == 0);
    CHECK(-root.bias > 0.0);
    CHECK(-root.bias < 1.0);
  }
  SUBCASE("single class") {
    CHECK(code_of([] { train_axis_aligned(one_dim({0, 1, 2}, {2, 2, 2}), 3); }) == ErrorCode::DegenerateData);
  }
  SUBCASE("three blobs at depth six") {
    const auto d = make_blobs(2, 3, 100, 1.5, 7);
    const auto t = train_axis_aligned(d, 6);
    int errors = 0;
    for (size_t i = 0; i < d.rows.size(); ++i) errors += predict(t, d.rows[i]) != d.labels[i];
    CHECK(errors == 5);  // frozen at build time; 5 / 300
    CHECK(errors <= 30);
    for (auto id : t.leaves()) CHECK(t.path_to(id).size() <= 7);
  }
  SUBCASE("deterministic") {
    const auto d = make_census_like(300, 2);
    CHECK(train_axis_aligned(d, 5) == train_axis_aligned(d, 5));
    CHECK(parse_tree(serialize_tree(train_axis_aligned(d, 5))) == train_axis_aligned(d, 5));
  }
}

TEST_CASE("random oblique generator") {
  SUBCASE("small") {
    const auto t = gen_random_oblique(2, 2, 2, 7);
    CHECK(t.nodes().size() == 7);
    CHECK(t.leaves().size() == 4);
    std::vector<ClassLabel> labels;
    for (auto id : t.leaves()) labels.push_back(t.node(id).label);
    CHECK(labels == std::vector<ClassLabel>{1, 2, 1, 2});
    for (const auto& n : t.nodes())
      if (!n.is_leaf) CHECK(n.weights.norm() == doctest::Approx(1.0));
    CHECK(gen_random_oblique(2, 2, 2, 7) == t);
    CHECK_FALSE(gen_random_oblique(2, 2, 2, 8) == t);
  }
  SUBCASE("image sized") {
    const auto t = gen_random_oblique(784, 6, 10, 1);
    CHECK(t.leaves().size() == 64);
    std::set<ClassLabel> seen;
    for (auto id : t.leaves()) seen.insert(t.node(id).label);
    CHECK(seen.size() == 10);
    CHECK(parse_tree(serialize_tree(t)) == t);
  }
  SUBCASE("splits are balanced on fresh samples") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    const auto t = gen_random_oblique(3, 3, 2, 12);
    std::map<NodeId, int> hits;
    for (int i = 0; i < 20000; ++i) {
      const Vector x = vec({g(rng), g(rng), g(rng)});
      for (auto id : t.path_to(t.route(x))) ++hits[id];
    }
    for (const auto& n : t.nodes())
      if (!n.is_leaf && hits[n.id] > 500) {
        CHECK(hits[n.left] >= 0.05 * hits[n.id]);
        CHECK(hits[n.right] >= 0.05 * hits[n.id]);
      }
  }
}

TEST_CASE("dataset documents") {
  const auto d = make_census_like(20, 4);
  const auto back = dataset_from_json(dataset_to_json(d));
  CHECK(back.schema == d.schema);
  CHECK(back.rows == d.rows);
  CHECK(back.labels == d.labels);
  std::set<ClassLabel> classes(d.labels.begin(), d.labels.end());
  CHECK(classes.size() == 2);
}

TEST_CASE("oracle examples") {
  SUBCASE("halfspace by enumeration") {
    auto cs = open_set(2);
    cs.inequalities.push_back({vec({1, 1}), 2.0});
    const auto r = oracle_minimum(cs, CostFunction::l2(2), vec({0, 0}), OracleMode::KktEnumeration);
    CHECK(r.value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.point == vec({1, 1}));
  }
  SUBCASE("box corner by grid") {
    auto cs = open_set(2);
    cs.lower = vec({0, 0});
    cs.upper = vec({1, 1});
    const auto r = oracle_minimum(cs, CostFunction::l2(2), vec({2, 2}), OracleMode::Grid);
    CHECK(r.value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK((r.point - vec({1, 1})).norm() <= 1e-9);
  }
  SUBCASE("limits") {
    auto cs = open_set(5);
    CHECK(code_of([&] { oracle_minimum(cs, CostFunction::l2(5), Vector::Zero(5), OracleMode::Grid); }) ==
          ErrorCode::OracleTooLarge);
    auto many = open_set(2);
    for (int i = 0; i < 21; ++i) many.inequalities.push_back({vec({1, 0.01 * i}), -1.0});
    CHECK(code_of([&] { oracle_minimum(many, CostFunction::l2(2), Vector::Zero(2), OracleMode::KktEnumeration); }) ==
          ErrorCode::OracleTooLarge);
  }
}

TEST_CASE("oracles agree on random polytopes") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g;
  int shared = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto cs = open_set(3);
    cs.lower = Vector::Constant(3, -3);
    cs.upper = Vector::Constant(3, 3);
    const Vector inside = Vector::NullaryExpr(3, [&] { return 0.5 * g(rng); });
    for (int k = 0; k < 5; ++k) {
      const Vector a = Vector::NullaryExpr(3, [&] { return g(rng); }).normalized();
      cs.inequalities.push_back({a, a.dot(inside) - 0.2 - std::abs(g(rng))});
    }
    const Vector center = Vector::NullaryExpr(3, [&] { return 2 * g(rng); });
    const auto cost = CostFunction::l2(3, vec({1, 0.5, 2}));
    const auto grid = oracle_minimum(cs, cost, center, OracleMode::Grid);
    const auto kkt = oracle_minimum(cs, cost, center, OracleMode::KktEnumeration);
    OracleOptions so;
    so.samples = 20000;
    so.radius = 3;
    const auto sampled = oracle_minimum(cs, cost, center, OracleMode::Sampling, so);
    REQUIRE(std::isfinite(kkt.value));
    CHECK(std::abs(grid.value - kkt.value) <= grid.value_resolution + 1e-12);
    CHECK(kkt.value >= grid.value - grid.value_resolution - 1e-12);
    CHECK(sampled.value >= kkt.value - 1e-12);
    CHECK(check_feasible_point(cs, kkt.point, 1e-9));
    ++shared;
  }
  CHECK(shared == 20);
}

TEST_CASE("tree grid oracle against per-leaf enumeration") {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> g;
  for (int seed = 0; seed < 6; ++seed) {
    const auto t = gen_random_oblique(2, 3, 2, 900 + seed);
    const Vector center = vec({g(rng), g(rng)});
    const ClassLabel target = 3 - predict(t, center);
    const auto cs = compile(t.schema(), center, {}, nullptr, 0.0);
    const auto grid = tree_grid_oracle(t, {target}, {0.0, 0.0}, cs, CostFunction::l2(2), center);
    double best = kInf;
    for (auto id : target_leaves(t, {target})) {
      const auto region = leaf_region(t, id);
      const auto leaf_cs = compile(t.schema(), center, {}, &region, 0.0);
      best = std::min(best, oracle_minimum(leaf_cs, CostFunction::l2(2), center, OracleMode::KktEnumeration).value);
    }
    CHECK(grid.value >= best - 1e-12);
    CHECK(grid.value - best <= grid.value_resolution + 1e-12);
    CHECK(predict(t, grid.point) == target);
  }
}

TEST_CASE("assignment enumeration and rounding fixture search") {
  const auto f = find_rounding_fixture(RoundingPitfall::Suboptimal, 3);
  const auto e = enumerate_assignments(f.program, f.integrality, f.blocks);
  REQUIRE(e.optimal());
  for (int d : f.integrality) CHECK((e.x[d] == 0.0 || e.x[d] == 1.0));
  CHECK(f.program.max_violation(e.x) <= 1e-9);
  const auto back = rounding_fixture_from_json(rounding_fixture_to_json(f));
  CHECK(rounding_fixture_to_json(back) == rounding_fixture_to_json(f));
}

#include <random>

#include "doctest.h"

#include <nlohmann/json.hpp>

#include "cftree/constraints.hpp"
#include "cftree/fixtures.hpp"
#include "test_util.hpp"

using namespace cftree;
using nlohmann::json;
using testutil::code_of;
using testutil::vec;

namespace {

bool same_rows(const std::vector<ConstraintRow>& a, const std::vector<ConstraintRow>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].a != b[i].a || a[i].rhs != b[i].rhs || a[i].origin != b[i].origin || a[i].node != b[i].node ||
        a[i].strict != b[i].strict)
      return false;
  return true;
}

FeatureSchema pixel_schema(int n) {
  std::vector<FeatureDecl> f;
  for (int i = 0; i < n; ++i) f.push_back({"p" + std::to_string(i), ContinuousKind{0.0, 1.0}});
  return FeatureSchema(std::move(f), {"a", "b"});
}

}  // namespace

TEST_CASE("freezing three categorical features pins their blocks") {
  const auto data = make_census_like(20, 3);
  const auto& schema = data.schema;
  const Vector& x = data.rows[0];
  UserConstraints uc;
  uc.freeze = {"race", "native_country", "sex"};
  const auto cs = compile(schema, x, uc, nullptr, 0.0);

  for (const auto* name : {"race", "native_country", "sex"}) {
    const auto r = schema.range(schema.index_of(name));
    for (int d = r.offset; d < r.offset + r.size; ++d) {
      CHECK(cs.frozen[d]);
      CHECK(cs.lower[d] == x[d]);
      CHECK(cs.upper[d] == x[d]);
    }
  }
  // education and marital_status keep their one-hot rows
  CHECK(cs.one_hot_blocks.size() == 2);
  CHECK(cs.equalities.size() == 2);
  CHECK(cs.integrality.size() == 7);
  for (const auto& b : cs.one_hot_blocks)
    for (int d = b.offset; d < b.offset + b.size; ++d) {
      CHECK(cs.lower[d] == 0.0);
      CHECK(cs.upper[d] == 1.0);
    }
  CHECK(cs.lower[0] == 17.0);
  CHECK(cs.upper[0] == 90.0);
  CHECK(check_feasible_point(cs, x, 0.0));
}

TEST_CASE("add ink only") {
  const auto schema = pixel_schema(9);
  Vector x = Vector::Zero(9);
  x[4] = 0.6;
  UserConstraints uc;
  uc.monotone["*"] = Monotone::NonDecreasing;
  const auto cs = compile(schema, x, uc, nullptr, 0.0);
  CHECK(cs.lower == x);
  CHECK(cs.upper == Vector::Ones(9));
  CHECK(cs.inequalities.empty());
  Vector erase = x;
  erase[4] = 0.5;
  CHECK_FALSE(check_feasible_point(cs, erase, 1e-9));
  Vector add = x;
  add[0] = 1.0;
  CHECK(check_feasible_point(cs, add, 0.0));
}

TEST_CASE("identity compile is exactly the region rows") {
  const auto t = testutil::figure_two_tree();
  const auto region = leaf_region(*t, 15);
  const auto cs = compile(t->schema(), vec({0, 0}), {}, &region, 0.0);
  REQUIRE(cs.inequalities.size() == region.rows.size());
  for (size_t i = 0; i < region.rows.size(); ++i) {
    const auto& r = region.rows[i];
    CHECK(cs.inequalities[i].a == r.sign * r.weights);
    CHECK(cs.inequalities[i].rhs == -r.sign * r.bias);
    CHECK(cs.inequalities[i].node == r.node);
    CHECK(cs.inequalities[i].strict == r.strict);
  }
  CHECK(cs.equalities.empty());
  CHECK(cs.integrality.empty());
  CHECK((cs.lower.array() == -kInf).all());
  CHECK((cs.upper.array() == kInf).all());
}

TEST_CASE("epsilon shifts only path rows") {
  const auto t = testutil::figure_two_tree();
  const auto region = leaf_region(*t, 15);
  UserConstraints uc;
  uc.bounds["x1"] = {-5, 5};
  const auto a = compile(t->schema(), vec({0, 0}), uc, &region, 0.0);
  const auto b = compile(t->schema(), vec({0, 0}), uc, &region, 0.25);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  for (size_t i = 0; i < a.inequalities.size(); ++i) CHECK(b.inequalities[i].rhs == a.inequalities[i].rhs + 0.25);

  // axis-aligned path rows fold into the box, shifted the same way
  std::vector<TreeNode> nodes{testutil::decision(1, vec({1, 0}), -1.0, 2, 3), testutil::leaf(2, 1),
                              testutil::leaf(3, 2)};
  const TreeModel stump(TreeKind::AxisAligned, 2, 1, nodes, FeatureSchema::continuous(2, 2));
  const auto right = leaf_region(stump, 3), left = leaf_region(stump, 2);
  CHECK(compile(stump.schema(), vec({0, 0}), {}, &right, 0.5).lower[0] == 1.5);
  const auto l = compile(stump.schema(), vec({0, 0}), {}, &left, 0.5);
  CHECK(l.upper[0] == 0.5);
  CHECK(l.upper_strict[0]);
  CHECK(l.inequalities.empty());
}

TEST_CASE("compile errors") {
  const auto data = make_census_like(5, 1);
  const Vector& x = data.rows[0];
  CHECK(code_of([&] { compile(data.schema, x, {}, nullptr, -1.0); }) == ErrorCode::InvalidEpsilon);
  CHECK(code_of([&] { compile(data.schema, x, {}, nullptr, kInf); }) == ErrorCode::InvalidEpsilon);
  UserConstraints outside;
  outside.bounds["age"] = {x[0] + 1, x[0] + 2};
  outside.freeze = {"age"};
  CHECK(code_of([&] { compile(data.schema, x, outside, nullptr, 0.0); }) == ErrorCode::ContradictoryConstraints);
  UserConstraints empty;
  empty.bounds["hours_per_week"] = {5, 4};
  CHECK(code_of([&] { compile(data.schema, x, empty, nullptr, 0.0); }) == ErrorCode::ContradictoryConstraints);
  UserConstraints disjoint;
  disjoint.bounds["hours_per_week"] = {200, 300};
  CHECK(code_of([&] { compile(data.schema, x, disjoint, nullptr, 0.0); }) == ErrorCode::ContradictoryConstraints);
  UserConstraints unknown;
  unknown.freeze = {"zodiac"};
  CHECK(code_of([&] { compile(data.schema, x, unknown, nullptr, 0.0); }) == ErrorCode::SchemaMismatch);
}

TEST_CASE("max_delta caps the change") {
  const auto data = make_census_like(5, 1);
  Vector x = data.rows[0];
  UserConstraints uc;
  uc.max_delta["age"] = 0.5;
  uc.monotone["age"] = Monotone::NonDecreasing;
  const auto cs = compile(data.schema, x, uc, nullptr, 0.0);
  CHECK(cs.lower[0] == x[0]);
  CHECK(cs.upper[0] == x[0] + 0.5);
}

TEST_CASE("check_feasible_point examples") {
  const auto data = make_census_like(5, 2);
  const Vector& x = data.rows[0];
  UserConstraints all;
  for (const auto& f : data.schema.features()) all.freeze.push_back(f.name);
  CHECK(check_feasible_point(compile(data.schema, x, all, nullptr, 0.0), x, 0.0));

  const auto cs = compile(data.schema, x, {}, nullptr, 0.0);
  Vector half = x;
  const auto edu = data.schema.range(data.schema.index_of("education"));
  half.segment(edu.offset, edu.size).setZero();
  half[edu.offset] = half[edu.offset + 1] = 0.5;
  CHECK_FALSE(check_feasible_point(cs, half, 1e-9));

  ConstraintSet row;
  row.dim = 1;
  row.lower = vec({-kInf});
  row.upper = vec({kInf});
  row.inequalities.push_back({vec({1}), 1e-12});
  CHECK(check_feasible_point(row, vec({0}), 1e-9));
  CHECK_FALSE(check_feasible_point(row, vec({0}), 0.0));
}

TEST_CASE("compile is pure") {
  const auto t = gen_random_oblique(3, 4, 2, 5);
  UserConstraints uc;
  uc.bounds["x2"] = {-1, 3};
  uc.freeze = {"x3"};
  for (auto id : t.leaves()) {
    const auto r = leaf_region(t, id);
    const auto a = compile(t.schema(), vec({0.1, 0.2, 0.3}), uc, &r, 0.01);
    const auto b = compile(t.schema(), vec({0.1, 0.2, 0.3}), uc, &r, 0.01);
    CHECK(same_rows(a.inequalities, b.inequalities));
    CHECK(same_rows(a.equalities, b.equalities));
    CHECK(a.lower == b.lower);
    CHECK(a.upper == b.upper);
    CHECK(a.frozen == b.frozen);
  }
}

TEST_CASE("larger epsilon gives a smaller feasible set") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0, 2);
  const auto t = gen_random_oblique(2, 4, 2, 13);
  const std::vector<double> eps{0.0, 0.05, 0.2, 0.6};
  for (auto id : t.leaves()) {
    const auto r = leaf_region(t, id);
    std::vector<ConstraintSet> sets;
    for (double e : eps) sets.push_back(compile(t.schema(), vec({0, 0}), {}, &r, e));
    for (int i = 0; i < 3000; ++i) {
      const Vector x = vec({g(rng), g(rng)});
      for (size_t k = 1; k < sets.size(); ++k)
        if (check_feasible_point(sets[k], x, 0.0)) CHECK(check_feasible_point(sets[k - 1], x, 0.0));
    }
  }
}

TEST_CASE("feasible points route to their leaf") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0, 2);
  for (int seed = 0; seed < 5; ++seed) {
    const auto t = gen_random_oblique(3, 4, 3, 100 + seed);
    for (auto id : t.leaves()) {
      const auto r = leaf_region(t, id);
      const auto cs = compile(t.schema(), Vector::Zero(3), {}, &r, 0.0);
      for (int i = 0; i < 500; ++i) {
        const Vector x = vec({g(rng), g(rng), g(rng)});
        if (!check_feasible_point(cs, x, 0.0)) continue;
        bool strict_active = false;
        for (const auto& row : cs.inequalities) strict_active = strict_active || (row.strict && row.a.dot(x) == row.rhs);
        if (!strict_active) CHECK(t.route(x) == id);
      }
    }
  }
}

TEST_CASE("target specs") {
  CHECK(TargetSpec::single(2).resolve(3, 1) == std::vector<ClassLabel>{2});
  CHECK(code_of([] { TargetSpec::single(1).resolve(3, 1); }) == ErrorCode::InvalidArgument);
  auto same = TargetSpec::single(1);
  same.allow_same_class = true;
  CHECK(same.resolve(3, 1) == std::vector<ClassLabel>{1});
  CHECK(code_of([] { TargetSpec::single(4).resolve(3, 1); }) == ErrorCode::InvalidArgument);
  CHECK(TargetSpec::subset({1, 2, 3}).resolve(3, 2) == std::vector<ClassLabel>{1, 3});
  CHECK(code_of([] { TargetSpec::subset({2}).resolve(3, 2); }) == ErrorCode::EmptyTargetSet);
  const auto cc = TargetSpec::class_cost({0.0, kInf, 1.5});
  CHECK(cc.resolve(3, 1) == std::vector<ClassLabel>{1, 3});
  CHECK(cc.extra_cost(3) == 1.5);
  CHECK(code_of([] { TargetSpec::class_cost({1.0, -1.0}).resolve(2, 1); }) == ErrorCode::InvalidArgument);

  CHECK(target_from_json(json(2)).classes == std::vector<ClassLabel>{2});
  CHECK(target_from_json(json::parse("[1, 3]")).mode == TargetSpec::Mode::Subset);
  const auto doc = json::parse(R"({"class_costs": [0, 2, 5]})");
  const auto t = target_from_json(doc);
  CHECK(t.mode == TargetSpec::Mode::ClassCost);
  CHECK(target_from_json(target_to_json(t)).class_costs == t.class_costs);
}

TEST_CASE("user constraint documents") {
  const auto doc = json::parse(R"({"freeze": ["race"], "bounds": {"age": [20, 30]},
    "monotone": {"age": "nondecreasing"}, "max_delta": {"age": 0.5}, "epsilon": 0.01})");
  const auto uc = user_constraints_from_json(doc);
  CHECK(uc.freeze == std::vector<std::string>{"race"});
  CHECK(uc.bounds.at("age") == std::pair{20.0, 30.0});
  CHECK(uc.monotone.at("age") == Monotone::NonDecreasing);
  CHECK(uc.epsilon == 0.01);
  CHECK(user_constraints_from_json(user_constraints_to_json(uc)) == uc);
  CHECK(code_of([] { user_constraints_from_json(json::parse(R"({"freez": []})")); }) == ErrorCode::MalformedDocument);
}

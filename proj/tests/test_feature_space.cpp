#include <random>

#include "doctest.h"

#include <nlohmann/json.hpp>

#include "cftree/error.hpp"
#include "cftree/feature_space.hpp"
#include "test_util.hpp"

using namespace cftree;
using nlohmann::json;
using testutil::code_of;

namespace {

FeatureSchema age_color() {
  return FeatureSchema({{"age", ContinuousKind{}}, {"color", CategoricalKind{{"red", "green", "blue"}}}}, {"no", "yes"});
}

}  // namespace

TEST_CASE("encode lays out one-hot blocks") {
  const auto s = age_color();
  CHECK(s.encoded_dim() == 4);
  const Vector x = encode(s, {{{"age", 25.0}, {"color", std::string("green")}}});
  CHECK(x == (Vector(4) << 25, 0, 1, 0).finished());

  const auto one = FeatureSchema::continuous(1, 2);
  CHECK(encode(one, {{{"x1", 0.0}}}) == Vector::Zero(1));

  CHECK(code_of([&] { encode(s, {{{"age", 25.0}, {"color", std::string("purple")}}}); }) == ErrorCode::UnknownCategory);
  CHECK(code_of([&] { encode(s, {{{"age", 25.0}}}); }) == ErrorCode::SchemaMismatch);
  const FeatureSchema bounded({{"h", ContinuousKind{0, 1}}}, {"a", "b"});
  CHECK(code_of([&] { encode(bounded, {{{"h", 2.0}}}); }) == ErrorCode::OutOfRangeValue);
}

TEST_CASE("decode inverts encode within tolerance") {
  const auto s = age_color();
  const RawInstance expect{{{"age", 25.0}, {"color", std::string("green")}}};
  CHECK(decode(s, (Vector(4) << 25, 0, 1, 0).finished()) == expect);
  CHECK(decode(s, (Vector(4) << 25, 0, 1 + 1e-9, 0).finished(), 1e-6) == expect);
  CHECK(code_of([&] { decode(s, (Vector(4) << 25, 0.5, 0.5, 0).finished()); }) == ErrorCode::NonIntegralBlock);
  CHECK(code_of([&] { decode(s, Vector::Zero(3)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("schema invariants") {
  CHECK(code_of([] { FeatureSchema({{"c", CategoricalKind{{"only"}}}}, {"a"}); }) == ErrorCode::MalformedDocument);
  CHECK(code_of([] { FeatureSchema({{"c", CategoricalKind{{"a", "a"}}}}, {"a"}); }) == ErrorCode::MalformedDocument);
  CHECK(code_of([] { FeatureSchema({{"x", ContinuousKind{2, 1}}}, {"a"}); }) == ErrorCode::MalformedDocument);
  CHECK(code_of([] {
          FeatureSchema({{"c", CategoricalKind{{"a", "b"}}, false, Monotone::NonDecreasing}}, {"a"});
        }) == ErrorCode::MalformedDocument);
  CHECK(code_of([] { FeatureSchema({{"x", ContinuousKind{}}, {"x", ContinuousKind{}}}, {"a"}); }) ==
        ErrorCode::MalformedDocument);
  // binary categoricals still take two coordinates
  const FeatureSchema b({{"sex", CategoricalKind{{"f", "m"}}}}, {"a"});
  CHECK(b.encoded_dim() == 2);
}

TEST_CASE("schema document round trip") {
  const json doc = json::parse(R"({
    "features": [
      {"name": "age", "kind": "continuous", "lower": 17, "upper": 90, "monotone": "nondecreasing"},
      {"name": "race", "kind": "categorical", "categories": ["a", "b", "c"], "immutable_by_default": true}
    ],
    "classes": ["low", "high"]})");
  const auto s = schema_from_json(doc);
  CHECK(s.encoded_dim() == 4);
  CHECK(s.class_count() == 2);
  CHECK(s.feature(0).monotone == Monotone::NonDecreasing);
  CHECK(s.feature(1).immutable_by_default);
  CHECK(schema_from_json(schema_to_json(s)) == s);
}

TEST_CASE("random schemas round trip through encode and decode") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> nf(1, 6), nc(2, 5), coin(0, 1);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<FeatureDecl> fs;
    const int count = nf(rng);
    int dim = 0;
    for (int f = 0; f < count; ++f) {
      if (coin(rng)) {
        std::vector<std::string> cats;
        const int c = nc(rng);
        for (int k = 0; k < c; ++k) cats.push_back("c" + std::to_string(k));
        fs.push_back({"f" + std::to_string(f), CategoricalKind{cats}});
        dim += c;
      } else {
        fs.push_back({"f" + std::to_string(f), ContinuousKind{}});
        dim += 1;
      }
    }
    const FeatureSchema s(fs, {"a", "b"});
    REQUIRE(s.encoded_dim() == dim);
    RawInstance raw;
    for (const auto& f : fs) {
      if (f.is_categorical()) {
        const auto& cats = f.categorical().categories;
        std::uniform_int_distribution<size_t> pick(0, cats.size() - 1);
        raw.values.emplace_back(f.name, cats[pick(rng)]);
      } else {
        raw.values.emplace_back(f.name, u(rng));
      }
    }
    const Vector x = encode(s, raw);
    CHECK(x.size() == dim);
    for (int f = 0; f < s.feature_count(); ++f)
      if (s.feature(f).is_categorical()) CHECK(x.segment(s.range(f).offset, s.range(f).size).sum() == 1.0);
    CHECK(decode(s, x) == raw);
    CHECK(raw_from_json(s, raw_to_json(raw)) == raw);
  }
}

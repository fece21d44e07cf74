#include "cftree/feature_space.hpp"

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "cftree/error.hpp"

namespace cftree {

using nlohmann::json;

FeatureSchema::FeatureSchema(std::vector<FeatureDecl> features, std::vector<std::string> class_names)
    : features_(std::move(features)), class_names_(std::move(class_names)) {
  std::set<std::string> names;
  for (const auto& f : features_) {
    if (f.name.empty()) throw Error(ErrorCode::MalformedDocument, "feature with empty name");
    if (!names.insert(f.name).second)
      throw Error(ErrorCode::MalformedDocument, "duplicate feature name '" + f.name + "'");
    if (f.is_categorical()) {
      const auto& cats = f.categorical().categories;
      if (cats.size() < 2)
        throw Error(ErrorCode::MalformedDocument,
                    "categorical feature '" + f.name + "' needs at least 2 categories");
      std::set<std::string> unique(cats.begin(), cats.end());
      if (unique.size() != cats.size())
        throw Error(ErrorCode::MalformedDocument,
                    "categorical feature '" + f.name + "' has duplicate categories");
      if (f.monotone != Monotone::None)
        throw Error(ErrorCode::MalformedDocument,
                    "monotone declared on categorical feature '" + f.name + "'");
    } else {
      const auto& c = f.continuous();
      if (std::isnan(c.lower) || std::isnan(c.upper) || c.lower > c.upper)
        throw Error(ErrorCode::MalformedDocument, "feature '" + f.name + "' has lower > upper");
    }
    CoordRange r{encoded_dim_, f.width()};
    ranges_.push_back(r);
    for (int k = 0; k < r.size; ++k) coord_owner_.push_back(static_cast<int>(ranges_.size()) - 1);
    encoded_dim_ += r.size;
  }
  if (class_names_.size() < 1) throw Error(ErrorCode::MalformedDocument, "schema declares no classes");
}

FeatureSchema FeatureSchema::continuous(int dim, int class_count) {
  std::vector<FeatureDecl> features;
  for (int d = 0; d < dim; ++d) features.push_back({"x" + std::to_string(d + 1), ContinuousKind{}});
  std::vector<std::string> classes;
  for (int k = 1; k <= class_count; ++k) classes.push_back(std::to_string(k));
  return FeatureSchema(std::move(features), std::move(classes));
}

std::optional<int> FeatureSchema::find(const std::string& name) const {
  for (size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return static_cast<int>(i);
  return std::nullopt;
}

int FeatureSchema::index_of(const std::string& name) const {
  auto i = find(name);
  if (!i) throw Error(ErrorCode::SchemaMismatch, "unknown feature '" + name + "'");
  return *i;
}

bool FeatureSchema::has_categoricals() const {
  for (const auto& f : features_)
    if (f.is_categorical()) return true;
  return false;
}

bool FeatureSchema::operator==(const FeatureSchema& other) const {
  if (class_names_ != other.class_names_ || features_.size() != other.features_.size()) return false;
  for (size_t i = 0; i < features_.size(); ++i) {
    const auto& a = features_[i];
    const auto& b = other.features_[i];
    if (a.name != b.name || a.immutable_by_default != b.immutable_by_default ||
        a.monotone != b.monotone || a.is_categorical() != b.is_categorical())
      return false;
    if (a.is_categorical()) {
      if (a.categorical().categories != b.categorical().categories) return false;
    } else if (a.continuous().lower != b.continuous().lower ||
               a.continuous().upper != b.continuous().upper) {
      return false;
    }
  }
  return true;
}

Vector encode(const FeatureSchema& schema, const RawInstance& raw) {
  if (static_cast<int>(raw.values.size()) != schema.feature_count())
    throw Error(ErrorCode::SchemaMismatch, "instance has " + std::to_string(raw.values.size()) +
                                               " features, schema has " +
                                               std::to_string(schema.feature_count()));
  Vector x = Vector::Zero(schema.encoded_dim());
  for (int i = 0; i < schema.feature_count(); ++i) {
    const auto& decl = schema.feature(i);
    const auto& [name, value] = raw.values[static_cast<size_t>(i)];
    if (name != decl.name)
      throw Error(ErrorCode::SchemaMismatch, "expected feature '" + decl.name + "', got '" + name + "'");
    const CoordRange r = schema.range(i);
    if (decl.is_categorical()) {
      const auto* cat = std::get_if<std::string>(&value);
      if (!cat) throw Error(ErrorCode::SchemaMismatch, "feature '" + name + "' expects a category name");
      const auto& cats = decl.categorical().categories;
      auto it = std::find(cats.begin(), cats.end(), *cat);
      if (it == cats.end())
        throw Error(ErrorCode::UnknownCategory, "'" + *cat + "' is not a category of '" + name + "'");
      x[r.offset + static_cast<int>(it - cats.begin())] = 1.0;
    } else {
      const auto* v = std::get_if<double>(&value);
      if (!v) throw Error(ErrorCode::SchemaMismatch, "feature '" + name + "' expects a number");
      const auto& c = decl.continuous();
      if (!std::isfinite(*v) || *v < c.lower || *v > c.upper)
        throw Error(ErrorCode::OutOfRangeValue, "feature '" + name + "' value out of range");
      x[r.offset] = *v;
    }
  }
  return x;
}

RawInstance decode(const FeatureSchema& schema, const Vector& x, double tolerance) {
  if (x.size() != schema.encoded_dim())
    throw Error(ErrorCode::DimensionMismatch, "encoded vector has dimension " + std::to_string(x.size()) +
                                                  ", schema expects " +
                                                  std::to_string(schema.encoded_dim()));
  RawInstance raw;
  for (int i = 0; i < schema.feature_count(); ++i) {
    const auto& decl = schema.feature(i);
    const CoordRange r = schema.range(i);
    if (!decl.is_categorical()) {
      raw.values.emplace_back(decl.name, x[r.offset]);
      continue;
    }
    int hot = -1;
    for (int k = 0; k < r.size; ++k) {
      const double v = x[r.offset + k];
      if (std::abs(v - 1.0) <= tolerance) {
        if (hot >= 0) hot = -2;
        else if (hot == -1) hot = k;
      } else if (std::abs(v) > tolerance) {
        hot = -2;
      }
      if (hot == -2) break;
    }
    if (hot < 0)
      throw Error(ErrorCode::NonIntegralBlock, "one-hot block of '" + decl.name + "' is not integral");
    raw.values.emplace_back(decl.name, decl.categorical().categories[static_cast<size_t>(hot)]);
  }
  return raw;
}

namespace {

double bound_from_json(const json& doc, const char* key, double fallback) {
  if (!doc.contains(key) || doc[key].is_null()) return fallback;
  const auto& v = doc[key];
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw Error(ErrorCode::MalformedDocument, std::string("bad bound '") + key + "'");
}

Monotone monotone_from_string(const std::string& s) {
  if (s == "none") return Monotone::None;
  if (s == "nondecreasing") return Monotone::NonDecreasing;
  if (s == "nonincreasing") return Monotone::NonIncreasing;
  throw Error(ErrorCode::MalformedDocument, "unknown monotone direction '" + s + "'");
}

const char* monotone_to_string(Monotone m) {
  switch (m) {
    case Monotone::NonDecreasing: return "nondecreasing";
    case Monotone::NonIncreasing: return "nonincreasing";
    case Monotone::None: break;
  }
  return "none";
}

}  // namespace

FeatureSchema schema_from_json(const json& doc) {
  try {
    if (!doc.is_object() || !doc.contains("features") || !doc["features"].is_array())
      throw Error(ErrorCode::MalformedDocument, "schema needs a 'features' array");
    std::vector<FeatureDecl> features;
    for (const auto& f : doc["features"]) {
      FeatureDecl decl;
      decl.name = f.at("name").get<std::string>();
      const auto kind = f.value("kind", std::string("continuous"));
      if (kind == "continuous") {
        decl.kind = ContinuousKind{bound_from_json(f, "lower", -kInf), bound_from_json(f, "upper", kInf)};
      } else if (kind == "categorical") {
        decl.kind = CategoricalKind{f.at("categories").get<std::vector<std::string>>()};
      } else {
        throw Error(ErrorCode::MalformedDocument, "unknown feature kind '" + kind + "'");
      }
      decl.immutable_by_default = f.value("immutable_by_default", false);
      if (f.contains("monotone") && !f["monotone"].is_null())
        decl.monotone = monotone_from_string(f["monotone"].get<std::string>());
      features.push_back(std::move(decl));
    }
    std::vector<std::string> classes;
    if (doc.contains("classes")) {
      const auto& c = doc["classes"];
      if (c.is_array()) {
        classes = c.get<std::vector<std::string>>();
      } else if (c.is_number_integer()) {
        for (int k = 1; k <= c.get<int>(); ++k) classes.push_back(std::to_string(k));
      }
    }
    return FeatureSchema(std::move(features), std::move(classes));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
}

json schema_to_json(const FeatureSchema& schema) {
  json features = json::array();
  for (const auto& f : schema.features()) {
    json j{{"name", f.name}};
    if (f.is_categorical()) {
      j["kind"] = "categorical";
      j["categories"] = f.categorical().categories;
    } else {
      j["kind"] = "continuous";
      if (std::isfinite(f.continuous().lower)) j["lower"] = f.continuous().lower;
      if (std::isfinite(f.continuous().upper)) j["upper"] = f.continuous().upper;
    }
    if (f.immutable_by_default) j["immutable_by_default"] = true;
    if (f.monotone != Monotone::None) j["monotone"] = monotone_to_string(f.monotone);
    features.push_back(std::move(j));
  }
  return json{{"features", std::move(features)}, {"classes", schema.class_names()}};
}

RawInstance raw_from_json(const FeatureSchema& schema, const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::MalformedDocument, "instance must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!schema.find(it.key()))
      throw Error(ErrorCode::SchemaMismatch, "instance names unknown feature '" + it.key() + "'");
  RawInstance raw;
  for (const auto& f : schema.features()) {
    if (!doc.contains(f.name))
      throw Error(ErrorCode::SchemaMismatch, "instance is missing feature '" + f.name + "'");
    const auto& v = doc[f.name];
    if (v.is_number()) raw.values.emplace_back(f.name, v.get<double>());
    else if (v.is_string()) raw.values.emplace_back(f.name, v.get<std::string>());
    else throw Error(ErrorCode::MalformedDocument, "feature '" + f.name + "' has a non-scalar value");
  }
  return raw;
}

json raw_to_json(const RawInstance& raw) {
  json out = json::object();
  for (const auto& [name, value] : raw.values)
    std::visit([&](const auto& v) { out[name] = v; }, value);
  return out;
}

}  // namespace cftree

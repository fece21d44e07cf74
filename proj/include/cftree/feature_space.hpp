#pragma once

#include <Eigen/Core>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cftree {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Monotone { None, NonDecreasing, NonIncreasing };

struct ContinuousKind {
  double lower = -kInf;
  double upper = kInf;
};

struct CategoricalKind {
  std::vector<std::string> categories;
};

struct FeatureDecl {
  std::string name;
  std::variant<ContinuousKind, CategoricalKind> kind;
  bool immutable_by_default = false;
  Monotone monotone = Monotone::None;

  bool is_categorical() const { return std::holds_alternative<CategoricalKind>(kind); }
  const ContinuousKind& continuous() const { return std::get<ContinuousKind>(kind); }
  const CategoricalKind& categorical() const { return std::get<CategoricalKind>(kind); }
  // Number of encoded coordinates this feature occupies.
  int width() const {
    return is_categorical() ? static_cast<int>(categorical().categories.size()) : 1;
  }
};

/// Encoded coordinate range [offset, offset + size) of one feature.
struct CoordRange {
  int offset = 0;
  int size = 0;
};

/// Ordered feature declarations plus the one-hot layout derived from them.
///
/// Features occupy contiguous coordinate ranges in declaration order;
/// categorical features expand to one dummy coordinate per category
/// (binary categoricals included).
class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::vector<FeatureDecl> features, std::vector<std::string> class_names);

  /// All-continuous, unbounded schema with features x1..xD and K classes.
  static FeatureSchema continuous(int dim, int class_count);

  const std::vector<FeatureDecl>& features() const { return features_; }
  const FeatureDecl& feature(int i) const { return features_.at(static_cast<size_t>(i)); }
  int feature_count() const { return static_cast<int>(features_.size()); }
  int encoded_dim() const { return encoded_dim_; }
  int class_count() const { return static_cast<int>(class_names_.size()); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  CoordRange range(int feature) const { return ranges_.at(static_cast<size_t>(feature)); }
  std::optional<int> find(const std::string& name) const;
  int index_of(const std::string& name) const;  // throws SchemaMismatch
  // Feature owning an encoded coordinate.
  int feature_of_coord(int coord) const { return coord_owner_.at(static_cast<size_t>(coord)); }
  bool has_categoricals() const;

  bool operator==(const FeatureSchema& other) const;

 private:
  std::vector<FeatureDecl> features_;
  std::vector<std::string> class_names_;
  std::vector<CoordRange> ranges_;
  std::vector<int> coord_owner_;
  int encoded_dim_ = 0;
};

using RawValue = std::variant<double, std::string>;

/// Named per-feature values, in schema declaration order.
struct RawInstance {
  std::vector<std::pair<std::string, RawValue>> values;

  bool operator==(const RawInstance&) const = default;
};

inline constexpr double kDefaultDecodeTolerance = 1e-6;

Vector encode(const FeatureSchema& schema, const RawInstance& raw);
RawInstance decode(const FeatureSchema& schema, const Vector& x,
                   double tolerance = kDefaultDecodeTolerance);

// JSON documents.
FeatureSchema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const FeatureSchema& schema);
// Accepts an object keyed by feature name; order follows the schema.
RawInstance raw_from_json(const FeatureSchema& schema, const nlohmann::json& doc);
nlohmann::json raw_to_json(const RawInstance& raw);

}  // namespace cftree

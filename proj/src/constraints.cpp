#include "cftree/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "cftree/error.hpp"
#include "json_util.hpp"

namespace cftree {

using nlohmann::json;

namespace {

Monotone parse_monotone(const std::string& s) {
  if (s == "nondecreasing") return Monotone::NonDecreasing;
  if (s == "nonincreasing") return Monotone::NonIncreasing;
  if (s == "none") return Monotone::None;
  throw Error(ErrorCode::MalformedDocument, "unknown monotone direction '" + s + "'");
}

const char* monotone_name(Monotone m) {
  switch (m) {
    case Monotone::NonDecreasing: return "nondecreasing";
    case Monotone::NonIncreasing: return "nonincreasing";
    case Monotone::None: return "none";
  }
  return "none";
}

// Feature indices named by a key; "*" expands to all continuous features.
std::vector<int> resolve_names(const FeatureSchema& schema, const std::string& name) {
  std::vector<int> out;
  if (name == "*") {
    for (int f = 0; f < schema.feature_count(); ++f)
      if (!schema.feature(f).is_categorical()) out.push_back(f);
  } else {
    out.push_back(schema.index_of(name));
  }
  return out;
}

int continuous_coord(const FeatureSchema& schema, int f, const char* what) {
  if (schema.feature(f).is_categorical())
    throw Error(ErrorCode::InvalidArgument,
                std::string(what) + " on categorical feature '" + schema.feature(f).name + "'");
  return schema.range(f).offset;
}

}  // namespace

UserConstraints user_constraints_from_json(const json& doc) {
  UserConstraints uc;
  if (doc.is_null()) return uc;
  try {
    if (!doc.is_object()) throw Error(ErrorCode::MalformedDocument, "constraints must be an object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "freeze") {
        uc.freeze = v.get<std::vector<std::string>>();
      } else if (k == "unfreeze") {
        uc.unfreeze = v.get<std::vector<std::string>>();
      } else if (k == "bounds") {
        for (auto b = v.begin(); b != v.end(); ++b) {
          if (!b.value().is_array() || b.value().size() != 2)
            throw Error(ErrorCode::MalformedDocument, "bounds for '" + b.key() + "' must be [lo, hi]");
          const double lo = b.value()[0].is_null() ? -kInf : detail::number_from_json(b.value()[0]);
          const double hi = b.value()[1].is_null() ? kInf : detail::number_from_json(b.value()[1]);
          uc.bounds[b.key()] = {lo, hi};
        }
      } else if (k == "monotone") {
        for (auto m = v.begin(); m != v.end(); ++m) uc.monotone[m.key()] = parse_monotone(m.value().get<std::string>());
      } else if (k == "max_delta") {
        for (auto m = v.begin(); m != v.end(); ++m) uc.max_delta[m.key()] = m.value().get<double>();
      } else if (k == "epsilon") {
        uc.epsilon = v.get<double>();
      } else if (k == "candidate_set") {
        if (!v.is_null()) uc.candidate_set = v.get<std::string>();
      } else {
        throw Error(ErrorCode::MalformedDocument, "unknown constraint key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("constraints: ") + e.what());
  }
  return uc;
}

json user_constraints_to_json(const UserConstraints& uc) {
  json j = json::object();
  if (!uc.freeze.empty()) j["freeze"] = uc.freeze;
  if (!uc.unfreeze.empty()) j["unfreeze"] = uc.unfreeze;
  if (!uc.bounds.empty()) {
    json b = json::object();
    for (const auto& [k, v] : uc.bounds) b[k] = {detail::number_to_json(v.first), detail::number_to_json(v.second)};
    j["bounds"] = b;
  }
  if (!uc.monotone.empty()) {
    json m = json::object();
    for (const auto& [k, v] : uc.monotone) m[k] = monotone_name(v);
    j["monotone"] = m;
  }
  if (!uc.max_delta.empty()) j["max_delta"] = uc.max_delta;
  if (uc.epsilon != 0.0) j["epsilon"] = uc.epsilon;
  if (uc.candidate_set) j["candidate_set"] = *uc.candidate_set;
  return j;
}

ConstraintSet compile(const FeatureSchema& schema, const Vector& source, const UserConstraints& user,
                      const LeafRegion* region, double epsilon, const CompileOptions& options) {
  if (!std::isfinite(epsilon) || epsilon < 0.0)
    throw Error(ErrorCode::InvalidEpsilon, "epsilon must be finite and >= 0, got " + std::to_string(epsilon));
  const int D = schema.encoded_dim();
  if (source.size() != D)
    throw Error(ErrorCode::DimensionMismatch, "source instance has " + std::to_string(source.size()) +
                                                  " coordinates, schema has " + std::to_string(D));
  ConstraintSet cs;
  cs.dim = D;
  cs.lower = Vector::Constant(D, -kInf);
  cs.upper = Vector::Constant(D, kInf);
  cs.frozen.assign(static_cast<size_t>(D), false);
  cs.upper_strict.assign(static_cast<size_t>(D), false);
  cs.candidate_set = user.candidate_set;

  // Schema bounds and categorical boxes.
  for (int f = 0; f < schema.feature_count(); ++f) {
    const auto& decl = schema.feature(f);
    const auto r = schema.range(f);
    if (decl.is_categorical()) {
      cs.lower.segment(r.offset, r.size).setZero();
      cs.upper.segment(r.offset, r.size).setOnes();
    } else {
      cs.lower[r.offset] = decl.continuous().lower;
      cs.upper[r.offset] = decl.continuous().upper;
    }
  }

  // User bounds.
  for (const auto& [name, b] : user.bounds) {
    const int d = continuous_coord(schema, schema.index_of(name), "bounds");
    if (std::isnan(b.first) || std::isnan(b.second) || b.first > b.second)
      throw Error(ErrorCode::ContradictoryConstraints, "bounds for '" + name + "' are empty");
    cs.lower[d] = std::max(cs.lower[d], b.first);
    cs.upper[d] = std::min(cs.upper[d], b.second);
  }

  // Freezes: declared immutables plus the user list, minus explicit unfreezes.
  std::set<int> frozen_features;
  for (int f = 0; f < schema.feature_count(); ++f)
    if (schema.feature(f).immutable_by_default) frozen_features.insert(f);
  for (const auto& name : user.freeze)
    for (int f : resolve_names(schema, name)) frozen_features.insert(f);
  for (const auto& name : user.unfreeze)
    for (int f : resolve_names(schema, name)) frozen_features.erase(f);
  for (int f : frozen_features) {
    const auto r = schema.range(f);
    for (int d = r.offset; d < r.offset + r.size; ++d) {
      if (source[d] < cs.lower[d] || source[d] > cs.upper[d])
        throw Error(ErrorCode::ContradictoryConstraints,
                    "frozen feature '" + schema.feature(f).name + "' lies outside its bounds");
      cs.lower[d] = cs.upper[d] = source[d];
      cs.frozen[static_cast<size_t>(d)] = true;
    }
  }

  // Monotone directions: declared, then user overrides.
  std::map<int, Monotone> mono;
  for (int f = 0; f < schema.feature_count(); ++f)
    if (schema.feature(f).monotone != Monotone::None) mono[f] = schema.feature(f).monotone;
  for (const auto& [name, m] : user.monotone)
    for (int f : resolve_names(schema, name)) mono[f] = m;
  for (const auto& [f, m] : mono) {
    const int d = continuous_coord(schema, f, "monotone");
    if (m == Monotone::NonDecreasing) cs.lower[d] = std::max(cs.lower[d], source[d]);
    if (m == Monotone::NonIncreasing) cs.upper[d] = std::min(cs.upper[d], source[d]);
  }

  for (const auto& [name, delta] : user.max_delta) {
    const int d = continuous_coord(schema, schema.index_of(name), "max_delta");
    if (!(delta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "max_delta for '" + name + "' must be >= 0");
    cs.lower[d] = std::max(cs.lower[d], source[d] - delta);
    cs.upper[d] = std::min(cs.upper[d], source[d] + delta);
  }

  for (int d = 0; d < D; ++d)
    if (cs.lower[d] > cs.upper[d])
      throw Error(ErrorCode::ContradictoryConstraints,
                  "constraints on '" + schema.feature(schema.feature_of_coord(d)).name + "' leave no value");

  // Path rows, shifted by epsilon (plus any boundary margin).
  if (region) {
    for (const auto& r : region->rows) {
      if (r.weights.size() != D) throw Error(ErrorCode::DimensionMismatch, "region rows do not match the schema");
      const double shift = epsilon + ((r.strict || options.margin_all_rows) ? options.strict_margin : 0.0);
      if (r.feature >= 0) {
        // sign * (x_d + b) >= shift
        const int d = r.feature;
        const double w = r.weights[d];
        if (r.sign > 0) {
          cs.lower[d] = std::max(cs.lower[d], (shift - r.bias) / w);
        } else {
          const double u = (-shift - r.bias) / w;
          auto&& strict = cs.upper_strict[static_cast<size_t>(d)];
          if (u < cs.upper[d]) {
            cs.upper[d] = u;
            strict = r.strict;
          } else if (u == cs.upper[d]) {
            strict = strict || r.strict;
          }
        }
        continue;
      }
      ConstraintRow row;
      row.a = r.sign * r.weights;
      row.rhs = shift - r.sign * r.bias;
      row.origin = RowOrigin::Region;
      row.node = r.node;
      row.strict = r.strict;
      cs.inequalities.push_back(std::move(row));
    }
  }

  // One-hot sums and integrality for categorical blocks that can still move.
  for (int f = 0; f < schema.feature_count(); ++f) {
    if (!schema.feature(f).is_categorical() || frozen_features.count(f)) continue;
    const auto r = schema.range(f);
    ConstraintRow row;
    row.a = Vector::Zero(D);
    row.a.segment(r.offset, r.size).setOnes();
    row.rhs = 1.0;
    row.origin = RowOrigin::OneHot;
    cs.equalities.push_back(std::move(row));
    for (int d = r.offset; d < r.offset + r.size; ++d) cs.integrality.push_back(d);
    cs.one_hot_blocks.push_back(r);
  }
  return cs;
}

bool check_feasible_point(const ConstraintSet& cs, const Vector& x, double tolerance) {
  if (x.size() != cs.dim) return false;
  for (int d = 0; d < cs.dim; ++d)
    if (!(x[d] >= cs.lower[d] - tolerance && x[d] <= cs.upper[d] + tolerance)) return false;
  for (const auto& r : cs.inequalities)
    if (!(r.a.dot(x) - r.rhs >= -tolerance)) return false;
  for (const auto& r : cs.equalities)
    if (!(std::abs(r.a.dot(x) - r.rhs) <= tolerance)) return false;
  for (int d : cs.integrality)
    if (!(std::abs(x[d]) <= tolerance || std::abs(x[d] - 1.0) <= tolerance)) return false;
  for (const auto& b : cs.one_hot_blocks)
    if (!(std::abs(x.segment(b.offset, b.size).sum() - 1.0) <= tolerance)) return false;
  return true;
}

ProgramInstance build_program(const ConstraintSet& cs, const LoweredCost& cost) {
  if (cost.dim != cs.dim) throw Error(ErrorCode::DimensionMismatch, "cost and constraints differ in dimension");
  const int n = cost.num_vars();
  const int D = cs.dim;
  ProgramInstance p;
  p.hessian = cost.hessian;
  p.linear = cost.linear;
  p.constant = cost.constant;
  p.lower = Vector::Zero(n);
  p.upper = Vector::Constant(n, kInf);
  p.lower.head(D) = cs.lower;
  p.upper.head(D) = cs.upper;

  const int m_in = static_cast<int>(cs.inequalities.size()) + static_cast<int>(cost.rows.rows());
  p.ineq_rows = RowMatrix::Zero(m_in, n);
  p.ineq_rhs = Vector::Zero(m_in);
  int k = 0;
  for (const auto& r : cs.inequalities) {
    p.ineq_rows.row(k).head(D) = r.a.transpose();
    p.ineq_rhs[k++] = r.rhs;
  }
  for (Eigen::Index i = 0; i < cost.rows.rows(); ++i) {
    p.ineq_rows.row(k) = cost.rows.row(i);
    p.ineq_rhs[k++] = cost.rhs[i];
  }
  p.eq_rows = RowMatrix::Zero(static_cast<Eigen::Index>(cs.equalities.size()), n);
  p.eq_rhs = Vector::Zero(static_cast<Eigen::Index>(cs.equalities.size()));
  for (size_t i = 0; i < cs.equalities.size(); ++i) {
    p.eq_rows.row(static_cast<Eigen::Index>(i)).head(D) = cs.equalities[i].a.transpose();
    p.eq_rhs[static_cast<Eigen::Index>(i)] = cs.equalities[i].rhs;
  }
  return p;
}

TargetSpec TargetSpec::single(ClassLabel y) {
  TargetSpec t;
  t.mode = Mode::Single;
  t.classes = {y};
  return t;
}

TargetSpec TargetSpec::subset(std::vector<ClassLabel> ys) {
  TargetSpec t;
  t.mode = Mode::Subset;
  t.classes = std::move(ys);
  return t;
}

TargetSpec TargetSpec::class_cost(std::vector<double> costs) {
  TargetSpec t;
  t.mode = Mode::ClassCost;
  t.class_costs = std::move(costs);
  return t;
}

std::vector<ClassLabel> TargetSpec::resolve(int class_count, ClassLabel source) const {
  std::vector<ClassLabel> out;
  if (mode == Mode::ClassCost) {
    if (static_cast<int>(class_costs.size()) != class_count)
      throw Error(ErrorCode::InvalidArgument, "class costs need one entry per class (1.." +
                                                  std::to_string(class_count) + ")");
    for (int y = 1; y <= class_count; ++y) {
      const double c = class_costs[static_cast<size_t>(y - 1)];
      if (!(c >= 0.0) || std::isnan(c)) throw Error(ErrorCode::InvalidArgument, "class costs must be >= 0");
      if (std::isfinite(c)) out.push_back(y);
    }
    if (out.empty()) throw Error(ErrorCode::EmptyTargetSet, "every class has infinite cost");
    return out;
  }
  if (classes.empty()) throw Error(ErrorCode::EmptyTargetSet, "target class set is empty");
  for (auto y : classes) {
    if (y < 1 || y > class_count)
      throw Error(ErrorCode::InvalidArgument,
                  "target class " + std::to_string(y) + " outside valid range 1.." + std::to_string(class_count));
    if (y == source && !allow_same_class) {
      if (mode == Mode::Single)
        throw Error(ErrorCode::InvalidArgument, "target class " + std::to_string(y) +
                                                    " is the source's class; allow same-class mode to improve cost");
      continue;
    }
    if (std::find(out.begin(), out.end(), y) == out.end()) out.push_back(y);
  }
  if (out.empty()) throw Error(ErrorCode::EmptyTargetSet, "target set contains only the source class");
  std::sort(out.begin(), out.end());
  return out;
}

double TargetSpec::extra_cost(ClassLabel y) const {
  if (mode != Mode::ClassCost) return 0.0;
  return class_costs.at(static_cast<size_t>(y - 1));
}

TargetSpec target_from_json(const json& doc) {
  try {
    if (doc.is_number_integer()) return TargetSpec::single(doc.get<int>());
    if (doc.is_array()) return TargetSpec::subset(doc.get<std::vector<int>>());
    if (!doc.is_object()) throw Error(ErrorCode::MalformedDocument, "target must be a class, a list or an object");
    TargetSpec t;
    if (doc.contains("class_costs")) {
      std::vector<double> costs;
      for (const auto& c : doc["class_costs"]) costs.push_back(detail::number_from_json(c));
      t = TargetSpec::class_cost(std::move(costs));
    } else if (doc.contains("classes")) {
      t = TargetSpec::subset(doc["classes"].get<std::vector<int>>());
    } else if (doc.contains("class")) {
      t = TargetSpec::single(doc["class"].get<int>());
    } else {
      throw Error(ErrorCode::MalformedDocument, "target object needs class, classes or class_costs");
    }
    t.allow_same_class = doc.value("allow_same_class", false);
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("target: ") + e.what());
  }
}

json target_to_json(const TargetSpec& t) {
  json j;
  switch (t.mode) {
    case TargetSpec::Mode::Single: j = {{"class", t.classes.at(0)}}; break;
    case TargetSpec::Mode::Subset: j = {{"classes", t.classes}}; break;
    case TargetSpec::Mode::ClassCost: {
      json c = json::array();
      for (double v : t.class_costs) c.push_back(detail::number_to_json(v));
      j = {{"class_costs", c}};
      break;
    }
  }
  if (t.allow_same_class) j["allow_same_class"] = true;
  return j;
}

}  // namespace cftree

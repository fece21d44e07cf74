#include "cftree/tree_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "cftree/convex.hpp"
#include "cftree/error.hpp"
#include "json_util.hpp"

namespace cftree {

using nlohmann::json;

namespace {

std::string id_str(NodeId id) { return std::to_string(id); }

// The single coordinate an axis-aligned weight row tests, or -1.
int unit_coordinate(const Vector& w) {
  int found = -1;
  for (Eigen::Index d = 0; d < w.size(); ++d) {
    if (w[d] == 0.0) continue;
    if (w[d] != 1.0 || found >= 0) return -1;
    found = static_cast<int>(d);
  }
  return found;
}

}  // namespace

TreeModel::TreeModel(TreeKind kind, int class_count, NodeId root, std::vector<TreeNode> nodes,
                     FeatureSchema schema)
    : kind_(kind), class_count_(class_count), root_(root), nodes_(std::move(nodes)),
      schema_(std::move(schema)) {
  if (class_count_ < 1) throw Error(ErrorCode::MalformedDocument, "class count must be positive");
  if (schema_.class_count() != class_count_)
    throw Error(ErrorCode::SchemaMismatch, "schema declares " + std::to_string(schema_.class_count()) +
                                               " classes, tree declares " + std::to_string(class_count_));
  if (nodes_.empty()) throw Error(ErrorCode::MalformedDocument, "tree has no nodes");

  for (size_t i = 0; i < nodes_.size(); ++i) {
    const NodeId id = nodes_[i].id;
    if (id <= 0) throw Error(ErrorCode::MalformedDocument, "node ids must be positive, got " + id_str(id));
    if (!index_.emplace(id, i).second)
      throw Error(ErrorCode::MalformedDocument, "duplicate node id " + id_str(id));
  }
  if (!contains(root_)) throw Error(ErrorCode::UnknownNodeReference, "root " + id_str(root_) + " is not a node");

  const int D = schema_.encoded_dim();
  for (auto& n : nodes_) {
    n.parent = 0;
    if (n.is_leaf) {
      if (n.label < 1 || n.label > class_count_)
        throw Error(ErrorCode::MalformedDocument, "leaf " + id_str(n.id) + " label " +
                                                      std::to_string(n.label) + " outside 1.." +
                                                      std::to_string(class_count_));
      continue;
    }
    if (!contains(n.left) || !contains(n.right))
      throw Error(ErrorCode::UnknownNodeReference, "node " + id_str(n.id) + " references a missing child");
    if (n.weights.size() != D)
      throw Error(ErrorCode::BadWeightDimension, "node " + id_str(n.id) + " has " +
                                                     std::to_string(n.weights.size()) +
                                                     " weights, schema has " + std::to_string(D));
    if (!n.weights.allFinite() || !std::isfinite(n.bias))
      throw Error(ErrorCode::MalformedDocument, "node " + id_str(n.id) + " has non-finite parameters");
    if (kind_ == TreeKind::AxisAligned) {
      n.feature = unit_coordinate(n.weights);
      if (n.feature < 0)
        throw Error(ErrorCode::BadWeightDimension,
                    "axis-aligned node " + id_str(n.id) + " must have exactly one unit weight");
    } else {
      n.feature = -1;
    }
  }

  // Every node reachable exactly once from the root.
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<NodeId> stack{root_};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    const size_t i = index_.at(id);
    if (seen[i]) throw Error(ErrorCode::CyclicStructure, "node " + id_str(id) + " is reached twice");
    seen[i] = 1;
    const auto& n = nodes_[i];
    if (n.is_leaf) continue;
    nodes_[index_.at(n.left)].parent = id;
    nodes_[index_.at(n.right)].parent = id;
    stack.push_back(n.right);
    stack.push_back(n.left);
  }
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (!seen[i])
      throw Error(ErrorCode::MalformedDocument, "node " + id_str(nodes_[i].id) + " is unreachable from the root");

  for (const auto& n : nodes_)
    if (n.is_leaf) leaves_.push_back(n.id);
  std::sort(leaves_.begin(), leaves_.end());
}

const TreeNode& TreeModel::node(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::UnknownNodeReference, "no node " + id_str(id));
  return nodes_[it->second];
}

std::vector<NodeId> TreeModel::path_to(NodeId id) const {
  std::vector<NodeId> path;
  for (NodeId cur = id; cur != 0; cur = node(cur).parent) path.push_back(cur);
  std::reverse(path.begin(), path.end());
  return path;
}

double TreeModel::decision_value(const TreeNode& n, const Vector& x) const {
  if (n.feature >= 0) return x[n.feature] + n.bias;
  return n.weights.dot(x) + n.bias;
}

NodeId TreeModel::route(const Vector& x) const {
  if (x.size() != dim())
    throw Error(ErrorCode::DimensionMismatch,
                "instance has " + std::to_string(x.size()) + " coordinates, tree expects " + std::to_string(dim()));
  const TreeNode* n = &node(root_);
  while (!n->is_leaf) n = &node(decision_value(*n, x) >= 0.0 ? n->right : n->left);
  return n->id;
}

bool TreeModel::operator==(const TreeModel& other) const {
  if (kind_ != other.kind_ || class_count_ != other.class_count_ || root_ != other.root_ ||
      nodes_.size() != other.nodes_.size() || !(schema_ == other.schema_))
    return false;
  for (const auto& a : nodes_) {
    if (!other.contains(a.id)) return false;
    const auto& b = other.node(a.id);
    if (a.is_leaf != b.is_leaf) return false;
    if (a.is_leaf) {
      if (a.label != b.label) return false;
    } else if (a.left != b.left || a.right != b.right || a.bias != b.bias || a.weights != b.weights) {
      return false;
    }
  }
  return true;
}

ClassLabel predict(const TreeModel& tree, const Vector& x) { return tree.node(tree.route(x)).label; }

std::vector<bool> LeafRegion::strict_left() const {
  std::vector<bool> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.strict);
  return out;
}

bool LeafRegion::contains(const Vector& x) const {
  for (const auto& r : rows) {
    const double v = r.value(x);
    if (r.strict ? !(v > 0.0) : !(v >= 0.0)) return false;
  }
  return true;
}

LeafRegion leaf_region(const TreeModel& tree, NodeId leaf) {
  const auto& n = tree.node(leaf);
  if (!n.is_leaf) throw Error(ErrorCode::NotALeaf, "node " + id_str(leaf) + " is a decision node");
  LeafRegion region;
  region.leaf = leaf;
  region.label = n.label;
  region.path = tree.path_to(leaf);
  for (size_t k = 0; k + 1 < region.path.size(); ++k) {
    const auto& dn = tree.node(region.path[k]);
    RegionRow row;
    row.node = dn.id;
    row.sign = dn.right == region.path[k + 1] ? 1 : -1;
    row.weights = dn.weights;
    row.bias = dn.bias;
    row.feature = dn.feature;
    row.strict = row.sign < 0;
    region.rows.push_back(std::move(row));
  }
  if (tree.kind() == TreeKind::AxisAligned) {
    const int D = tree.dim();
    region.has_box = true;
    region.lower = Vector::Constant(D, -kInf);
    region.upper = Vector::Constant(D, kInf);
    region.upper_strict = Eigen::Matrix<bool, Eigen::Dynamic, 1>::Constant(D, false);
    for (const auto& r : region.rows) {
      const double t = -r.bias;
      if (r.sign > 0) {
        region.lower[r.feature] = std::max(region.lower[r.feature], t);
      } else if (t <= region.upper[r.feature]) {
        region.upper[r.feature] = t;
        region.upper_strict[r.feature] = true;
      }
    }
  }
  return region;
}

LeafRegion prune_redundant(const LeafRegion& region) {
  LeafRegion out = region;
  const size_t m = region.rows.size();
  std::vector<char> keep(m, 1);

  // Single-coordinate rows: keep only the tightest threshold per feature and side.
  for (size_t i = 0; i < m; ++i) {
    const auto& a = region.rows[i];
    if (a.feature < 0) continue;
    for (size_t j = 0; j < m && keep[i]; ++j) {
      if (j == i || !keep[j]) continue;
      const auto& b = region.rows[j];
      if (b.feature != a.feature || b.sign != a.sign) continue;
      const double ta = -a.bias, tb = -b.bias;
      const bool tighter = a.sign > 0 ? tb > ta : tb < ta;
      if (tighter || (tb == ta && j < i)) keep[i] = 0;
    }
  }

  // General rows: drop a row when its minimum over the other kept rows is positive.
  bool general = false;
  for (const auto& r : region.rows) general = general || r.feature < 0;
  if (general && m > 1) {
    const int D = static_cast<int>(region.rows.front().weights.size());
    for (size_t i = 0; i < m; ++i) {
      if (!keep[i] || region.rows[i].feature >= 0) continue;
      auto prog = ProgramInstance::unconstrained(D);
      const auto& r = region.rows[i];
      prog.linear = r.sign * r.weights;
      prog.constant = r.sign * r.bias;
      for (size_t j = 0; j < m; ++j) {
        if (j == i || !keep[j]) continue;
        const auto& o = region.rows[j];
        prog.add_ineq(o.sign * o.weights, -o.sign * o.bias);
      }
      SolveOutcome res;
      try {
        res = solve_lp(prog);
      } catch (const Error&) {
        continue;
      }
      if (res.status == SolveStatus::Infeasible) return region;
      if (res.optimal() && res.objective > 1e-9) keep[i] = 0;
    }
  }

  out.rows.clear();
  for (size_t i = 0; i < m; ++i)
    if (keep[i]) out.rows.push_back(region.rows[i]);
  return out;
}

std::vector<NodeId> target_leaves(const TreeModel& tree, const std::vector<ClassLabel>& targets) {
  if (targets.empty()) throw Error(ErrorCode::EmptyTargetSet, "target class set is empty");
  for (auto y : targets)
    if (y < 1 || y > tree.class_count())
      throw Error(ErrorCode::InvalidArgument, "target class " + std::to_string(y) + " outside 1.." +
                                                  std::to_string(tree.class_count()));
  std::vector<NodeId> out;
  for (auto id : tree.leaves())
    if (std::find(targets.begin(), targets.end(), tree.node(id).label) != targets.end()) out.push_back(id);
  return out;
}

TreeModel parse_tree(const json& doc) {
  try {
    if (!doc.is_object()) throw Error(ErrorCode::MalformedDocument, "tree document must be an object");
    const auto kind_s = doc.at("kind").get<std::string>();
    TreeKind kind;
    if (kind_s == "axis_aligned") kind = TreeKind::AxisAligned;
    else if (kind_s == "oblique") kind = TreeKind::Oblique;
    else throw Error(ErrorCode::MalformedDocument, "unknown tree kind '" + kind_s + "'");

    const auto& classes = doc.at("classes");
    int K = classes.is_array() ? static_cast<int>(classes.size()) : classes.get<int>();
    if (K < 1) throw Error(ErrorCode::MalformedDocument, "'classes' must be positive");

    const auto& nodes_doc = doc.at("nodes");
    if (!nodes_doc.is_array()) throw Error(ErrorCode::MalformedDocument, "'nodes' must be an array");

    FeatureSchema schema;
    if (doc.contains("schema") && !doc["schema"].is_null()) {
      json sdoc = doc["schema"];
      if (!sdoc.contains("classes")) sdoc["classes"] = K;
      schema = schema_from_json(sdoc);
    } else {
      int D = doc.value("dim", -1);
      for (const auto& n : nodes_doc)
        if (D < 0 && n.contains("weights")) D = static_cast<int>(n["weights"].size());
      if (D < 0) throw Error(ErrorCode::MalformedDocument, "tree needs a 'schema' (or 'dim')");
      schema = FeatureSchema::continuous(D, K);
    }
    const int D = schema.encoded_dim();

    std::vector<TreeNode> nodes;
    for (const auto& nd : nodes_doc) {
      TreeNode n;
      n.id = nd.at("id").get<int>();
      const auto type = nd.at("type").get<std::string>();
      if (type == "leaf") {
        n.is_leaf = true;
        n.label = nd.at("label").get<int>();
      } else if (type == "decision") {
        n.left = nd.at("left").get<int>();
        n.right = nd.at("right").get<int>();
        if (nd.contains("weights")) {
          n.weights = detail::vector_from_json(nd["weights"]);
          n.bias = nd.value("bias", 0.0);
        } else if (nd.contains("feature")) {
          const int d = nd["feature"].get<int>();
          if (d < 0 || d >= D)
            throw Error(ErrorCode::BadWeightDimension,
                        "node " + id_str(n.id) + " tests feature " + std::to_string(d) + " of " + std::to_string(D));
          n.weights = Vector::Zero(D);
          n.weights[d] = 1.0;
          n.bias = -nd.at("threshold").get<double>();
        } else {
          throw Error(ErrorCode::MalformedDocument, "decision node " + id_str(n.id) + " needs weights or feature");
        }
      } else {
        throw Error(ErrorCode::MalformedDocument, "unknown node type '" + type + "'");
      }
      nodes.push_back(std::move(n));
    }
    return TreeModel(kind, K, doc.value("root", 1), std::move(nodes), std::move(schema));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
}

json serialize_tree(const TreeModel& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    json j{{"id", n.id}};
    if (n.is_leaf) {
      j["type"] = "leaf";
      j["label"] = n.label;
    } else {
      j["type"] = "decision";
      if (tree.kind() == TreeKind::AxisAligned) {
        j["feature"] = n.feature;
        j["threshold"] = -n.bias;
      } else {
        j["weights"] = detail::vector_to_json(n.weights);
        j["bias"] = n.bias;
      }
      j["left"] = n.left;
      j["right"] = n.right;
    }
    nodes.push_back(std::move(j));
  }
  return json{{"kind", tree.kind() == TreeKind::AxisAligned ? "axis_aligned" : "oblique"},
              {"classes", tree.class_count()},
              {"root", tree.root()},
              {"nodes", std::move(nodes)},
              {"schema", schema_to_json(tree.schema())}};
}

}  // namespace cftree

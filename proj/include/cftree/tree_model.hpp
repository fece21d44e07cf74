#pragma once

#include <memory>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cftree/feature_space.hpp"

namespace cftree {

using NodeId = int;
using ClassLabel = int;  // 1..K

enum class TreeKind { AxisAligned, Oblique };

struct TreeNode {
  NodeId id = 0;
  bool is_leaf = false;
  // decision nodes: f(x) = weights . x + bias, right iff f(x) >= 0
  Vector weights;
  double bias = 0.0;
  int feature = -1;  // axis-aligned only: the single coordinate tested
  NodeId left = 0;
  NodeId right = 0;
  // leaves
  ClassLabel label = 0;
  NodeId parent = 0;  // 0 for the root
};

/// Hard-decision binary tree with hyperplane decision nodes and constant leaves.
///
/// Immutable after construction; the constructor validates structure, label
/// range and weight dimensions.
class TreeModel {
 public:
  TreeModel(TreeKind kind, int class_count, NodeId root, std::vector<TreeNode> nodes,
            FeatureSchema schema);

  TreeKind kind() const { return kind_; }
  int class_count() const { return class_count_; }
  int dim() const { return schema_.encoded_dim(); }
  NodeId root() const { return root_; }
  const FeatureSchema& schema() const { return schema_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(NodeId id) const;
  bool contains(NodeId id) const { return index_.count(id) != 0; }
  // Leaf ids in ascending order.
  const std::vector<NodeId>& leaves() const { return leaves_; }
  // Root-to-node path, inclusive.
  std::vector<NodeId> path_to(NodeId id) const;

  // The node's decision value f(x); shared by routing and region rows.
  double decision_value(const TreeNode& node, const Vector& x) const;

  NodeId route(const Vector& x) const;

  bool operator==(const TreeModel& other) const;

 private:
  TreeKind kind_;
  int class_count_;
  NodeId root_;
  std::vector<TreeNode> nodes_;
  FeatureSchema schema_;
  std::unordered_map<NodeId, size_t> index_;
  std::vector<NodeId> leaves_;
};

ClassLabel predict(const TreeModel& tree, const Vector& x);

/// One signed path constraint sign * (weights . x + bias) >= 0.
struct RegionRow {
  NodeId node = 0;
  int sign = 1;  // +1 right turn, -1 left turn
  Vector weights;
  double bias = 0.0;
  int feature = -1;     // set when the row tests a single coordinate
  bool strict = false;  // left turns: routing needs f(x) < 0

  double value(const Vector& x) const { return sign * (weights.dot(x) + bias); }
};

struct LeafRegion {
  NodeId leaf = 0;
  ClassLabel label = 0;
  std::vector<NodeId> path;
  std::vector<RegionRow> rows;
  // Axis-aligned trees only: tightest per-coordinate bounds implied by the rows.
  bool has_box = false;
  Vector lower;
  Vector upper;
  Eigen::Matrix<bool, Eigen::Dynamic, 1> upper_strict;  // upper bound came from a left turn

  std::vector<bool> strict_left() const;
  // True when every row holds, with strict inequality on left-turn rows.
  bool contains(const Vector& x) const;
};

LeafRegion leaf_region(const TreeModel& tree, NodeId leaf);

/// Drops rows implied by the remaining ones. Single-coordinate rows are
/// compared by threshold; general rows are tested by a linear program and
/// removed only when their minimum over the others is strictly positive.
LeafRegion prune_redundant(const LeafRegion& region);

std::vector<NodeId> target_leaves(const TreeModel& tree, const std::vector<ClassLabel>& targets);

TreeModel parse_tree(const nlohmann::json& doc);
nlohmann::json serialize_tree(const TreeModel& tree);

}  // namespace cftree

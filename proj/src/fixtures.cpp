#include "cftree/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/LU>
#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "cftree/convex.hpp"
#include "cftree/error.hpp"
#include "json_util.hpp"

namespace cftree {

using nlohmann::json;

// ---------------------------------------------------------------- datasets

SyntheticDataset dataset_from_json(const json& doc) {
  try {
    SyntheticDataset data;
    data.schema = schema_from_json(doc.at("schema"));
    const auto& rows = doc.at("rows");
    for (const auto& r : rows) {
      if (r.is_array()) {
        Vector x = detail::vector_from_json(r);
        if (x.size() != data.schema.encoded_dim())
          throw Error(ErrorCode::DimensionMismatch, "dataset row has the wrong dimension");
        data.rows.push_back(std::move(x));
      } else {
        data.rows.push_back(encode(data.schema, raw_from_json(data.schema, r)));
      }
    }
    if (doc.contains("labels")) data.labels = doc["labels"].get<std::vector<int>>();
    if (!data.labels.empty() && data.labels.size() != data.rows.size())
      throw Error(ErrorCode::MalformedDocument, "dataset needs one label per row");
    for (auto y : data.labels)
      if (y < 1 || y > data.schema.class_count())
        throw Error(ErrorCode::MalformedDocument, "dataset label " + std::to_string(y) + " out of range");
    data.seed = doc.value("seed", std::uint64_t{0});
    return data;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("dataset: ") + e.what());
  }
}

json dataset_to_json(const SyntheticDataset& data) {
  json rows = json::array();
  for (const auto& r : data.rows) rows.push_back(detail::vector_to_json(r));
  return json{{"schema", schema_to_json(data.schema)}, {"rows", std::move(rows)}, {"labels", data.labels},
              {"seed", data.seed}};
}

SyntheticDataset make_blobs(int dim, int classes, int per_class, double spread, std::uint64_t seed) {
  if (dim < 1 || classes < 1 || per_class < 1) throw Error(ErrorCode::InvalidArgument, "blobs need positive sizes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uc(-3.0, 3.0);
  std::normal_distribution<double> g(0.0, spread);
  SyntheticDataset data;
  data.schema = FeatureSchema::continuous(dim, classes);
  data.seed = seed;
  std::vector<Vector> centers;
  for (int k = 0; k < classes; ++k) {
    Vector c(dim);
    for (int d = 0; d < dim; ++d) c[d] = uc(rng);
    centers.push_back(c);
  }
  for (int i = 0; i < per_class; ++i)
    for (int k = 0; k < classes; ++k) {
      Vector x(dim);
      for (int d = 0; d < dim; ++d) x[d] = centers[static_cast<size_t>(k)][d] + g(rng);
      data.rows.push_back(std::move(x));
      data.labels.push_back(k + 1);
    }
  return data;
}

SyntheticDataset make_census_like(int n, std::uint64_t seed) {
  std::vector<FeatureDecl> f;
  f.push_back({"age", ContinuousKind{17, 90}});
  f.push_back({"hours_per_week", ContinuousKind{1, 99}});
  f.push_back({"capital_loss", ContinuousKind{0, 50}});
  f.push_back({"education", CategoricalKind{{"hs", "some_college", "bachelors", "masters"}}});
  f.push_back({"marital_status", CategoricalKind{{"single", "married", "divorced"}}});
  f.push_back({"race", CategoricalKind{{"group_a", "group_b", "group_c"}}});
  f.push_back({"sex", CategoricalKind{{"female", "male"}}});
  f.push_back({"native_country", CategoricalKind{{"us", "other"}}});
  SyntheticDataset data;
  data.schema = FeatureSchema(std::move(f), {"<=50K", ">50K"});
  data.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](int c) { return static_cast<int>(std::min<double>(c - 1, std::floor(u(rng) * c))); };
  for (int i = 0; i < n; ++i) {
    const double age = std::clamp(40.0 + 12.0 * g(rng), 17.0, 90.0);
    const double hours = std::clamp(40.0 + 10.0 * g(rng), 1.0, 99.0);
    const double loss = u(rng) < 0.8 ? 0.0 : std::min(50.0, 20.0 * u(rng) + 5.0);
    const int edu = pick(4), mar = pick(3), race = pick(3), sex = pick(2), nat = u(rng) < 0.85 ? 0 : 1;
    const double score = 0.06 * (age - 40) + 0.08 * (hours - 40) + 0.05 * loss + 0.9 * (edu - 1.5) +
                         (mar == 1 ? 1.0 : -0.4) + 0.2 * (nat == 0) + 0.6 * g(rng);
    Vector x = Vector::Zero(data.schema.encoded_dim());
    x[0] = age;
    x[1] = hours;
    x[2] = loss;
    int off = 3;
    for (auto [val, width] : {std::pair{edu, 4}, {mar, 3}, {race, 3}, {sex, 2}, {nat, 2}}) {
      x[off + val] = 1.0;
      off += width;
    }
    data.rows.push_back(std::move(x));
    data.labels.push_back(score > 0 ? 2 : 1);
  }
  return data;
}

// ------------------------------------------------------------------ trainer

namespace {

double gini(const std::vector<int>& counts, int total) {
  if (total == 0) return 0.0;
  double s = 0.0;
  for (int c : counts) {
    const double p = static_cast<double>(c) / total;
    s += p * p;
  }
  return 1.0 - s;
}

struct TreeBuilder {
  const SyntheticDataset& data;
  int max_depth;
  int min_split;
  int K;
  int D;
  std::vector<TreeNode> nodes;
  NodeId next_id = 1;

  NodeId build(std::vector<int> idx, int depth) {
    const NodeId id = next_id++;
    const size_t slot = nodes.size();
    nodes.push_back(TreeNode{});
    nodes[slot].id = id;

    std::vector<int> counts(static_cast<size_t>(K), 0);
    for (int i : idx) ++counts[static_cast<size_t>(data.labels[static_cast<size_t>(i)] - 1)];
    const int majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin()) + 1;
    const int n = static_cast<int>(idx.size());
    const double parent = gini(counts, n);

    double best = parent - 1e-12;
    int best_d = -1;
    double best_t = 0.0;
    if (depth < max_depth && n >= min_split && parent > 0.0) {
      std::vector<int> order = idx;
      for (int d = 0; d < D; ++d) {
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
          return data.rows[static_cast<size_t>(a)][d] < data.rows[static_cast<size_t>(b)][d];
        });
        std::vector<int> left(static_cast<size_t>(K), 0), right = counts;
        for (int k = 0; k + 1 < n; ++k) {
          const int y = data.labels[static_cast<size_t>(order[static_cast<size_t>(k)])] - 1;
          ++left[static_cast<size_t>(y)];
          --right[static_cast<size_t>(y)];
          const double a = data.rows[static_cast<size_t>(order[static_cast<size_t>(k)])][d];
          const double b = data.rows[static_cast<size_t>(order[static_cast<size_t>(k + 1)])][d];
          if (!(a < b)) continue;
          const double g = ((k + 1) * gini(left, k + 1) + (n - k - 1) * gini(right, n - k - 1)) / n;
          if (g < best) {
            best = g;
            best_d = d;
            best_t = 0.5 * (a + b);
          }
        }
      }
    }
    if (best_d < 0) {
      nodes[slot].is_leaf = true;
      nodes[slot].label = majority;
      return id;
    }
    std::vector<int> li, ri;
    for (int i : idx) (data.rows[static_cast<size_t>(i)][best_d] >= best_t ? ri : li).push_back(i);
    const NodeId l = build(std::move(li), depth + 1);
    const NodeId r = build(std::move(ri), depth + 1);
    auto& node = nodes[slot];
    node.weights = Vector::Zero(D);
    node.weights[best_d] = 1.0;
    node.bias = -best_t;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace

TreeModel train_axis_aligned(const SyntheticDataset& data, int max_depth, int min_samples_split) {
  if (data.rows.size() != data.labels.size() || data.rows.empty())
    throw Error(ErrorCode::InvalidArgument, "training data needs one label per row");
  if (max_depth < 0) throw Error(ErrorCode::InvalidArgument, "max_depth must be >= 0");
  std::vector<int> seen(static_cast<size_t>(data.schema.class_count()), 0);
  for (auto y : data.labels) seen.at(static_cast<size_t>(y - 1)) = 1;
  if (std::accumulate(seen.begin(), seen.end(), 0) < 2)
    throw Error(ErrorCode::DegenerateData, "training data contains a single class");
  TreeBuilder b{data, max_depth, min_samples_split, data.schema.class_count(), data.schema.encoded_dim(), {}, 1};
  std::vector<int> idx(data.rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  b.build(std::move(idx), 0);
  return TreeModel(TreeKind::AxisAligned, data.schema.class_count(), 1, std::move(b.nodes), data.schema);
}

// ---------------------------------------------------------------- generator

TreeModel gen_random_oblique(int dim, int depth, int classes, std::uint64_t seed, std::optional<FeatureSchema> schema) {
  if (depth < 1 || depth > 20) throw Error(ErrorCode::InvalidArgument, "depth must be in 1..20");
  if (classes < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 classes");
  FeatureSchema sc = schema ? *schema : FeatureSchema::continuous(dim, classes);
  if (sc.class_count() != classes) throw Error(ErrorCode::SchemaMismatch, "schema class count differs");
  const int D = sc.encoded_dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const int N = std::max(2000, 64 << std::min(depth, 14));
  Matrix S(N, D);
  for (int i = 0; i < N; ++i)
    for (int f = 0; f < sc.feature_count(); ++f) {
      const auto r = sc.range(f);
      const auto& decl = sc.feature(f);
      if (decl.is_categorical()) {
        const int c = std::min(r.size - 1, static_cast<int>(u(rng) * r.size));
        for (int k = 0; k < r.size; ++k) S(i, r.offset + k) = k == c ? 1.0 : 0.0;
      } else {
        const auto& ck = decl.continuous();
        double v = g(rng);
        if (std::isfinite(ck.lower) && std::isfinite(ck.upper)) v = ck.lower + u(rng) * (ck.upper - ck.lower);
        else if (std::isfinite(ck.lower)) v = ck.lower + std::abs(v);
        else if (std::isfinite(ck.upper)) v = ck.upper - std::abs(v);
        S(i, r.offset) = v;
      }
    }

  const int internal = (1 << depth) - 1;
  std::vector<TreeNode> nodes;
  std::vector<std::vector<int>> routed(static_cast<size_t>(2 * internal + 2));
  routed[1].resize(static_cast<size_t>(N));
  std::iota(routed[1].begin(), routed[1].end(), 0);

  for (int id = 1; id <= internal; ++id) {
    auto& idx = routed[static_cast<size_t>(id)];
    const int n = static_cast<int>(idx.size());
    if (n < 2) throw Error(ErrorCode::GenerationFailed, "node " + std::to_string(id) + " received too few samples");
    TreeNode node;
    node.id = id;
    node.left = 2 * id;
    node.right = 2 * id + 1;
    bool ok = false;
    Vector proj(n);
    for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
      Vector w(D);
      for (int d = 0; d < D; ++d) w[d] = g(rng);
      const double norm = w.norm();
      if (norm == 0.0) continue;
      w /= norm;
      for (int k = 0; k < n; ++k) proj[k] = S.row(idx[static_cast<size_t>(k)]).dot(w);
      std::vector<double> sorted(proj.data(), proj.data() + n);
      std::sort(sorted.begin(), sorted.end());
      const double q = 0.3 + 0.4 * u(rng);
      const int cut = std::clamp(static_cast<int>(q * (n - 1)), 0, n - 2);
      const double t = 0.5 * (sorted[static_cast<size_t>(cut)] + sorted[static_cast<size_t>(cut + 1)]);
      int right = 0;
      for (int k = 0; k < n; ++k) right += proj[k] + (-t) >= 0.0;
      const int need = static_cast<int>(std::ceil(0.1 * n));
      if (right >= need && n - right >= need) {
        node.weights = w;
        node.bias = -t;
        ok = true;
      }
    }
    if (!ok) throw Error(ErrorCode::GenerationFailed, "could not balance node " + std::to_string(id));
    for (int k = 0; k < n; ++k)
      routed[static_cast<size_t>(proj[k] + node.bias >= 0.0 ? node.right : node.left)].push_back(idx[static_cast<size_t>(k)]);
    idx.clear();
    idx.shrink_to_fit();
    nodes.push_back(std::move(node));
  }
  for (int l = 0; l <= internal; ++l) {
    TreeNode leaf;
    leaf.id = internal + 1 + l;
    leaf.is_leaf = true;
    leaf.label = l % classes + 1;
    nodes.push_back(std::move(leaf));
  }
  return TreeModel(TreeKind::Oblique, classes, 1, std::move(nodes), std::move(sc));
}

// ------------------------------------------------------------------ oracles

namespace {

struct Box {
  Vector lo, hi;
};

Box search_box(const ConstraintSet& cs, const Vector& center, double radius) {
  Box b{cs.lower, cs.upper};
  for (int d = 0; d < cs.dim; ++d) {
    const bool fl = std::isfinite(cs.lower[d]), fu = std::isfinite(cs.upper[d]);
    if (!fl) b.lo[d] = (fu ? std::min(cs.upper[d], center[d]) : center[d]) - radius;
    if (!fu) b.hi[d] = (fl ? std::max(cs.lower[d], center[d]) : center[d]) + radius;
  }
  return b;
}

// The first scan plus at least two refinements; more while the window shrinks.
constexpr int kGridMinLevels = 3;
constexpr int kGridMaxLevels = 12;

int default_points(int D) {
  switch (D) {
    case 1: return 2001;
    case 2: return 201;
    case 3: return 41;
    default: return 17;
  }
}

// Visits every lattice point of the box with n points per non-degenerate axis.
void scan_lattice(const Box& box, int n, const std::function<void(const Vector&)>& visit) {
  const auto D = box.lo.size();
  std::vector<int> counter(static_cast<size_t>(D), 0);
  std::vector<int> sizes(static_cast<size_t>(D));
  for (Eigen::Index d = 0; d < D; ++d) sizes[static_cast<size_t>(d)] = box.hi[d] > box.lo[d] ? n : 1;
  Vector p(D);
  while (true) {
    for (Eigen::Index d = 0; d < D; ++d) {
      const int s = sizes[static_cast<size_t>(d)];
      p[d] = s == 1 ? box.lo[d] : box.lo[d] + (box.hi[d] - box.lo[d]) * counter[static_cast<size_t>(d)] / (s - 1);
    }
    visit(p);
    Eigen::Index d = 0;
    for (; d < D; ++d) {
      if (++counter[static_cast<size_t>(d)] < sizes[static_cast<size_t>(d)]) break;
      counter[static_cast<size_t>(d)] = 0;
    }
    if (d == D) break;
  }
}

// Norm of a subgradient of the cost at p.
double subgradient_norm(const QuadraticForm& H, const Vector& l1, const Vector& center,
                        const Vector& p) {
  const Vector delta = p - center;
  return (H.apply(delta) + l1.cwiseProduct(delta.cwiseSign())).norm();
}

struct LatticeSearch {
  double value = kInf;
  Vector point;
  double spacing = 0.0;
  double floor = kInf;  // lower bound on the minimum over the start box
};

// Lattice scan refined until the window stops shrinking. For convex f and
// any lattice point q, f(x*) >= f(q) - |g(q)| |x* - q|. Assuming x* has a
// feasible lattice point within one cell diagonal, it lies near some q whose
// bound f(q) - |g(q)| diag is at most the best value found, so the next
// window covers every such q and min over q of that bound is a floor.
LatticeSearch refine_scan(const Box& start, int n, const std::function<double(const Vector&)>& value,
                          const std::function<double(const Vector&)>& slope) {
  LatticeSearch out;
  Box box = start;
  std::vector<double> vals;
  for (int level = 0; level < kGridMaxLevels; ++level) {
    vals.clear();
    double best = kInf;
    Vector best_p;
    scan_lattice(box, n, [&](const Vector& p) {
      const double v = value(p);
      vals.push_back(v);
      if (v < best) {
        best = v;
        best_p = p;
      }
    });
    if (!std::isfinite(best)) break;
    Vector h(box.lo.size());
    for (Eigen::Index d = 0; d < h.size(); ++d) h[d] = box.hi[d] > box.lo[d] ? (box.hi[d] - box.lo[d]) / (n - 1) : 0.0;
    const double diag = h.norm();

    Box next{Vector::Constant(h.size(), kInf), Vector::Constant(h.size(), -kInf)};
    double floor = kInf;
    size_t i = 0;
    scan_lattice(box, n, [&](const Vector& p) {
      const double v = vals[i++];
      if (!std::isfinite(v)) return;
      const double bound = v - slope(p) * diag;
      floor = std::min(floor, bound);
      if (bound <= best) {
        next.lo = next.lo.cwiseMin(p);
        next.hi = next.hi.cwiseMax(p);
      }
    });
    out.value = best;
    out.point = best_p;
    out.spacing = h.maxCoeff();
    out.floor = std::min(best, floor);
    next.lo = (next.lo.array() - diag).matrix().cwiseMax(box.lo);
    next.hi = (next.hi.array() + diag).matrix().cwiseMin(box.hi);
    const double shrink = (next.hi - next.lo).maxCoeff() / std::max((box.hi - box.lo).maxCoeff(), 1e-300);
    if (level + 1 >= kGridMinLevels && shrink > 0.9) break;
    box = next;
  }
  return out;
}

OracleResult grid_oracle(const ConstraintSet& cs, const CostFunction& cost, const Vector& center,
                         const OracleOptions& opt) {
  if (cs.dim > 4) throw Error(ErrorCode::OracleTooLarge, "grid oracle needs D <= 4");
  if (!cs.equalities.empty()) throw Error(ErrorCode::OracleTooLarge, "grid oracle cannot sample equality rows");
  const int n = opt.grid_points > 0 ? opt.grid_points : default_points(cs.dim);
  const Box outer = search_box(cs, center, opt.radius);
  const QuadraticForm H = cost.hessian();
  const Vector l1 = cost.l1_or_zero();
  const auto found = refine_scan(
      outer, n, [&](const Vector& p) { return check_feasible_point(cs, p, 0.0) ? cost.eval(p, center) : kInf; },
      [&](const Vector& p) { return subgradient_norm(H, l1, center, p); });
  OracleResult res;
  res.value = found.value;
  res.point = found.point;
  res.resolution = found.spacing;
  res.value_resolution = found.value - found.floor;
  return res;
}

OracleResult kkt_oracle(const ConstraintSet& cs, const CostFunction& cost, const Vector& center) {
  if (cost.has_l1()) throw Error(ErrorCode::InvalidArgument, "kkt enumeration needs a purely quadratic cost");
  const int n = cs.dim;
  std::vector<std::pair<Vector, double>> ineq, eq;
  for (const auto& r : cs.inequalities) ineq.emplace_back(r.a, r.rhs);
  for (const auto& r : cs.equalities) eq.emplace_back(r.a, r.rhs);
  for (int d = 0; d < n; ++d) {
    Vector e = Vector::Zero(n);
    e[d] = 1.0;
    if (cs.lower[d] == cs.upper[d]) {
      eq.emplace_back(e, cs.lower[d]);
      continue;
    }
    if (std::isfinite(cs.lower[d])) ineq.emplace_back(e, cs.lower[d]);
    if (std::isfinite(cs.upper[d])) ineq.emplace_back(-e, -cs.upper[d]);
  }
  if (ineq.size() + eq.size() > 20) throw Error(ErrorCode::OracleTooLarge, "kkt enumeration limited to 20 rows");

  const Matrix H = cost.hessian().to_dense();
  const Vector c = -H * center;
  const double c0 = 0.5 * center.dot(H * center);
  const int me = static_cast<int>(eq.size());
  const int mi = static_cast<int>(ineq.size());

  OracleResult res;
  res.value = kInf;
  std::vector<int> active;
  std::function<void(int)> recurse = [&](int start) {
    const int k = static_cast<int>(active.size());
    const int m = me + k;
    Matrix K = Matrix::Zero(n + m, n + m);
    Vector rhs = Vector::Zero(n + m);
    K.topLeftCorner(n, n) = H;
    rhs.head(n) = -c;
    for (int i = 0; i < m; ++i) {
      const auto& row = i < me ? eq[static_cast<size_t>(i)] : ineq[static_cast<size_t>(active[static_cast<size_t>(i - me)])];
      K.block(0, n + i, n, 1) = -row.first;
      K.block(n + i, 0, 1, n) = row.first.transpose();
      rhs[n + i] = row.second;
    }
    Vector sol;
    Eigen::FullPivLU<Matrix> lu(K);
    if (lu.isInvertible()) {
      sol = lu.solve(rhs);
    } else {
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(K);
      sol = cod.solve(rhs);
      if ((K * sol - rhs).norm() > 1e-9 * (1.0 + rhs.norm())) sol.resize(0);
    }
    if (sol.size() > 0) {
      const Vector x = sol.head(n);
      bool ok = true;
      for (int i = 0; i < k && ok; ++i) ok = sol[n + me + i] >= -1e-9;
      for (const auto& [a, b] : ineq) ok = ok && a.dot(x) - b >= -1e-9;
      for (const auto& [a, b] : eq) ok = ok && std::abs(a.dot(x) - b) <= 1e-9;
      if (ok) {
        const double v = 0.5 * x.dot(H * x) + c.dot(x) + c0;
        if (v < res.value) {
          res.value = v;
          res.point = x;
        }
      }
    }
    if (m >= n) return;
    for (int r = start; r < mi; ++r) {
      active.push_back(r);
      recurse(r + 1);
      active.pop_back();
    }
  };
  recurse(0);
  return res;
}

OracleResult sampling_oracle(const ConstraintSet& cs, const CostFunction& cost, const Vector& center,
                             const OracleOptions& opt) {
  if (!cs.equalities.empty() && cs.integrality.empty())
    throw Error(ErrorCode::OracleTooLarge, "sampling cannot hit equality rows");
  const Box box = search_box(cs, center, opt.radius);
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  OracleResult res;
  res.value = kInf;
  Vector p(cs.dim);
  for (int s = 0; s < opt.samples; ++s) {
    for (int d = 0; d < cs.dim; ++d) p[d] = box.lo[d] + u(rng) * (box.hi[d] - box.lo[d]);
    for (const auto& b : cs.one_hot_blocks) {
      const int c = std::min(b.size - 1, static_cast<int>(u(rng) * b.size));
      for (int k = 0; k < b.size; ++k) p[b.offset + k] = k == c ? 1.0 : 0.0;
    }
    if (!check_feasible_point(cs, p, 0.0)) continue;
    const double v = cost.eval(p, center);
    if (v < res.value) {
      res.value = v;
      res.point = p;
    }
  }
  return res;
}

}  // namespace

OracleResult oracle_minimum(const ConstraintSet& cs, const CostFunction& cost, const Vector& center, OracleMode mode,
                            const OracleOptions& options) {
  if (center.size() != cs.dim || cost.dim() != cs.dim)
    throw Error(ErrorCode::DimensionMismatch, "oracle inputs differ in dimension");
  switch (mode) {
    case OracleMode::Grid: return grid_oracle(cs, cost, center, options);
    case OracleMode::KktEnumeration: return kkt_oracle(cs, cost, center);
    case OracleMode::Sampling: return sampling_oracle(cs, cost, center, options);
  }
  return {};
}

namespace {

// Bounding box of a leaf region intersected with `outer`; nullopt when empty.
std::optional<Box> leaf_box(const LeafRegion& region, const Box& outer) {
  Box b = outer;
  if (region.has_box) {
    b.lo = b.lo.cwiseMax(region.lower);
    b.hi = b.hi.cwiseMin(region.upper);
    if ((b.lo.array() > b.hi.array()).any()) return std::nullopt;
    return b;
  }
  const int D = static_cast<int>(outer.lo.size());
  ProgramInstance p = ProgramInstance::unconstrained(D);
  p.lower = outer.lo;
  p.upper = outer.hi;
  for (const auto& r : region.rows) p.add_ineq(r.sign * r.weights, -r.sign * r.bias);
  for (int d = 0; d < D; ++d) {
    for (int side : {1, -1}) {
      p.linear.setZero();
      p.linear[d] = side;
      const SolveOutcome s = solve_lp(p);
      if (s.status == SolveStatus::Infeasible) return std::nullopt;
      if (!s.optimal()) continue;
      if (side > 0) b.lo[d] = std::max(outer.lo[d], s.x[d]);
      else b.hi[d] = std::min(outer.hi[d], s.x[d]);
    }
  }
  if ((b.lo.array() > b.hi.array()).any()) return std::nullopt;
  return b;
}

}  // namespace

OracleResult tree_grid_oracle(const TreeModel& tree, const std::vector<ClassLabel>& classes,
                              const std::vector<double>& extra, const ConstraintSet& cs, const CostFunction& cost,
                              const Vector& center, const OracleOptions& options) {
  if (tree.dim() > 4) throw Error(ErrorCode::OracleTooLarge, "grid oracle needs D <= 4");
  const int n = options.grid_points > 0 ? options.grid_points : default_points(tree.dim());
  const Box outer = search_box(cs, center, options.radius);
  auto extra_of = [&](ClassLabel y) { return extra.empty() ? 0.0 : extra[static_cast<size_t>(y - 1)]; };

  auto value_at = [&](const Vector& p) {
    if (!check_feasible_point(cs, p, 0.0)) return kInf;
    const ClassLabel y = tree.node(tree.route(p)).label;
    if (std::find(classes.begin(), classes.end(), y) == classes.end()) return kInf;
    return cost.eval(p, center) + extra_of(y);
  };

  // One lattice per target leaf, over the leaf's bounding box. For separable
  // costs the cost at the box projection of the center bounds the leaf from
  // below, so leaves are visited cheapest-first and skipped once dominated.
  struct Candidate {
    double lower_bound;
    NodeId leaf;
    Box box;
  };
  std::vector<Candidate> todo;
  for (NodeId leaf : target_leaves(tree, classes)) {
    const auto box = leaf_box(leaf_region(tree, leaf), outer);
    if (!box) continue;
    double lb = -kInf;
    if (cost.separable())
      lb = cost.eval(center.cwiseMax(box->lo).cwiseMin(box->hi), center) + extra_of(tree.node(leaf).label);
    todo.push_back({lb, leaf, *box});
  }
  std::stable_sort(todo.begin(), todo.end(),
                   [](const Candidate& a, const Candidate& b) { return a.lower_bound < b.lower_bound; });

  const QuadraticForm H = cost.hessian();
  const Vector l1 = cost.l1_or_zero();
  OracleResult res;
  res.value = kInf;
  double floor = kInf;  // lowest value any scanned leaf could still reach
  for (const auto& c : todo) {
    if (c.lower_bound >= res.value) break;
    const auto found = refine_scan(c.box, n, value_at,
                                   [&](const Vector& p) { return subgradient_norm(H, l1, center, p); });
    if (!std::isfinite(found.value)) continue;
    floor = std::min(floor, found.floor);
    if (found.value < res.value) {
      res.value = found.value;
      res.point = found.point;
      res.resolution = found.spacing;
    }
  }
  if (std::isfinite(res.value)) res.value_resolution = res.value - floor;
  return res;
}

SolveOutcome enumerate_assignments(const ProgramInstance& prog, const std::vector<int>& integrality,
                                   const std::vector<CoordRange>& one_hot_blocks) {
  std::vector<char> in_block(static_cast<size_t>(prog.num_vars()), 0);
  for (const auto& b : one_hot_blocks)
    for (int k = 0; k < b.size; ++k) in_block[static_cast<size_t>(b.offset + k)] = 1;
  std::vector<int> lone;
  for (int d : integrality)
    if (!in_block[static_cast<size_t>(d)]) lone.push_back(d);

  // Mixed radix: each block picks a category, each lone binary picks 0/1.
  std::vector<int> radix;
  for (const auto& b : one_hot_blocks) radix.push_back(b.size);
  for (size_t i = 0; i < lone.size(); ++i) radix.push_back(2);
  std::vector<int> digit(radix.size(), 0);

  SolveOutcome best;
  best.status = SolveStatus::Infeasible;
  best.objective = kInf;
  while (true) {
    ProgramInstance p = prog;
    bool ok = true;
    for (size_t b = 0; b < one_hot_blocks.size(); ++b)
      for (int k = 0; k < one_hot_blocks[b].size; ++k) {
        const int d = one_hot_blocks[b].offset + k;
        const double v = k == digit[b] ? 1.0 : 0.0;
        ok = ok && v >= prog.lower[d] && v <= prog.upper[d];
        p.lower[d] = p.upper[d] = v;
      }
    for (size_t i = 0; i < lone.size(); ++i) {
      const int d = lone[i];
      const double v = digit[one_hot_blocks.size() + i];
      ok = ok && v >= prog.lower[d] && v <= prog.upper[d];
      p.lower[d] = p.upper[d] = v;
    }
    if (ok) {
      p.warm_start.reset();
      SolveOutcome s = solve_program(p);
      if (s.optimal() && s.objective < best.objective) best = std::move(s);
    }
    size_t i = 0;
    for (; i < digit.size(); ++i) {
      if (++digit[i] < radix[i]) break;
      digit[i] = 0;
    }
    if (i == digit.size()) break;
  }
  return best;
}

RoundingFixture find_rounding_fixture(RoundingPitfall kind, std::uint64_t seed, int max_tries) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> cat(0, 2);
  for (int t = 0; t < max_tries; ++t) {
    RoundingFixture f;
    f.seed = seed;
    const int n = 5;  // two continuous coordinates, one block of three
    Vector center(n);
    center << g(rng), g(rng), 0, 0, 0;
    center[2 + cat(rng)] = 1.0;
    auto& p = f.program;
    p = ProgramInstance::unconstrained(n);
    p.hessian = QuadraticForm::diagonal(Vector::Constant(n, 2.0));
    p.linear = -2.0 * center;
    p.constant = center.squaredNorm();
    for (int d = 2; d < n; ++d) {
      p.lower[d] = 0.0;
      p.upper[d] = 1.0;
    }
    Vector ones = Vector::Zero(n);
    ones.tail(3).setOnes();
    p.add_eq(ones, 1.0);
    const int rows = 2 + t % 2;
    for (int r = 0; r < rows; ++r) {
      Vector a(n);
      for (int d = 0; d < n; ++d) a[d] = g(rng);
      p.add_ineq(a, 0.8 * g(rng));
    }
    f.integrality = {2, 3, 4};
    f.blocks = {CoordRange{2, 3}};

    const RoundingResult rr = relax_and_round(p, f.integrality, f.blocks);
    if (!rr.relaxation.optimal()) continue;
    const SolveOutcome exact = enumerate_assignments(p, f.integrality, f.blocks);
    if (!exact.optimal()) continue;
    if (kind == RoundingPitfall::Infeasible && !rr.feasible) return f;
    if (kind == RoundingPitfall::Suboptimal && rr.feasible && rr.objective > exact.objective + 1e-6) return f;
  }
  throw Error(ErrorCode::GenerationFailed, "no rounding fixture found");
}

json rounding_fixture_to_json(const RoundingFixture& f) {
  json blocks = json::array();
  for (const auto& b : f.blocks) blocks.push_back({{"offset", b.offset}, {"size", b.size}});
  return json{{"program", program_to_json(f.program)},
              {"integrality", f.integrality},
              {"blocks", std::move(blocks)},
              {"seed", f.seed}};
}

RoundingFixture rounding_fixture_from_json(const json& doc) {
  try {
    RoundingFixture f;
    f.program = program_from_json(doc.at("program"));
    f.integrality = doc.at("integrality").get<std::vector<int>>();
    for (const auto& b : doc.at("blocks")) f.blocks.push_back({b.at("offset").get<int>(), b.at("size").get<int>()});
    f.seed = doc.value("seed", std::uint64_t{0});
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("rounding fixture: ") + e.what());
  }
}

}  // namespace cftree

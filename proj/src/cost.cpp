#include "cftree/cost.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "cftree/error.hpp"
#include "json_util.hpp"

namespace cftree {

using nlohmann::json;

namespace {

Vector checked_weights(int dim, const std::optional<Vector>& w) {
  if (dim < 0) throw Error(ErrorCode::InvalidArgument, "negative dimension");
  if (!w) return Vector::Ones(dim);
  if (w->size() != dim)
    throw Error(ErrorCode::DimensionMismatch,
                "cost has " + std::to_string(w->size()) + " weights, expected " + std::to_string(dim));
  if (!w->allFinite() || (w->array() < 0).any())
    throw Error(ErrorCode::InvalidArgument, "cost weights must be finite and nonnegative");
  return *w;
}

bool is_diagonal(const Matrix& q) {
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j < q.cols(); ++j)
      if (i != j && q(i, j) != 0.0) return false;
  return true;
}

Matrix grid_matrix(const CostFunction::GridShorthand& g) {
  const int n = g.height * g.width;
  Matrix q = Matrix::Zero(n, n);
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c) {
      const int i = r * g.width + c;
      q(i, i) = g.diag;
      if (c + 1 < g.width) q(i, i + 1) = q(i + 1, i) = g.neighbor;
      if (r + 1 < g.height) q(i, i + g.width) = q(i + g.width, i) = g.neighbor;
    }
  return q;
}

// Throws unless q is symmetric PSD within 1e-8 relative to its largest diagonal.
// Returns whether q is singular within the same tolerance.
bool check_psd(const Matrix& q) {
  if (q.rows() != q.cols()) throw Error(ErrorCode::DimensionMismatch, "Q must be square");
  if (!q.allFinite()) throw Error(ErrorCode::NonPSDMatrix, "Q has non-finite entries");
  const double scale = std::max(q.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw Error(ErrorCode::NonPSDMatrix, "Q is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(q, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (lo < -1e-8 * scale)
    throw Error(ErrorCode::NonPSDMatrix, "Q has eigenvalue " + std::to_string(lo));
  return lo <= 1e-8 * scale;
}

}  // namespace

CostFunction CostFunction::l2(int dim, std::optional<Vector> weights) {
  CostFunction c;
  c.variant_ = Variant::L2;
  c.dim_ = dim;
  c.weights_ = checked_weights(dim, weights);
  c.finish();
  return c;
}

CostFunction CostFunction::l1(int dim, std::optional<Vector> weights) {
  CostFunction c;
  c.variant_ = Variant::L1;
  c.dim_ = dim;
  c.weights_ = checked_weights(dim, weights);
  c.finish();
  return c;
}

CostFunction CostFunction::quadratic(Matrix q) {
  CostFunction c;
  c.variant_ = Variant::Quadratic;
  c.dim_ = static_cast<int>(q.rows());
  check_psd(q);
  c.q_input_ = std::move(q);
  c.finish();
  return c;
}

CostFunction CostFunction::grid(const GridShorthand& g) {
  if (g.height <= 0 || g.width <= 0) throw Error(ErrorCode::InvalidArgument, "grid needs positive [h, w]");
  CostFunction c = quadratic(grid_matrix(g));
  c.grid_ = g;
  return c;
}

CostFunction CostFunction::combination(const std::vector<CostTerm>& terms) {
  if (terms.empty()) throw Error(ErrorCode::InvalidArgument, "combination needs at least one term");
  CostFunction c;
  c.variant_ = Variant::Combination;
  c.dim_ = terms.front().cost.dim();
  for (const auto& t : terms) {
    if (!(t.coefficient >= 0.0) || !std::isfinite(t.coefficient))
      throw Error(ErrorCode::InvalidArgument, "combination coefficients must be nonnegative");
    if (t.cost.dim() != c.dim_) throw Error(ErrorCode::DimensionMismatch, "combination terms differ in dimension");
    c.terms_.emplace_back(t.coefficient, std::make_shared<const CostFunction>(t.cost));
  }
  c.finish();
  return c;
}

void CostFunction::flatten_into(double scale, Vector& l1, Vector& l2, Matrix& q) const {
  switch (variant_) {
    case Variant::L1:
      l1 += scale * weights_;
      break;
    case Variant::L2:
      l2 += scale * weights_;
      break;
    case Variant::Quadratic:
      if (q.size() == 0) q = Matrix::Zero(dim_, dim_);
      q += scale * q_input_;
      break;
    case Variant::Combination:
      for (const auto& [coef, term] : terms_) term->flatten_into(scale * coef, l1, l2, q);
      break;
  }
}

void CostFunction::finish() {
  Vector l1 = Vector::Zero(dim_), l2 = Vector::Zero(dim_);
  Matrix q;
  flatten_into(1.0, l1, l2, q);
  if (q.size() > 0 && is_diagonal(q)) {
    l2 += q.diagonal();
    q.resize(0, 0);
  }
  if (q.size() > 0) rank_deficient_ = check_psd(q);
  else rank_deficient_ = ((l1.array() <= 0) && (l2.array() <= 0)).any();
  l1_ = (l1.array() > 0).any() ? l1 : Vector();
  l2_ = (l2.array() > 0).any() ? l2 : Vector();
  q_ = std::move(q);
}

double CostFunction::eval(const Vector& x, const Vector& center) const {
  if (x.size() != dim_ || center.size() != dim_)
    throw Error(ErrorCode::DimensionMismatch, "cost evaluated at the wrong dimension");
  const Vector delta = x - center;
  double e = 0.0;
  if (l1_.size() > 0) e += l1_.dot(delta.cwiseAbs());
  if (l2_.size() > 0) e += l2_.dot(delta.cwiseAbs2());
  if (q_.size() > 0) e += std::max(0.0, delta.dot(q_ * delta));
  return e;
}

Vector CostFunction::l1_or_zero() const { return l1_.size() > 0 ? l1_ : Vector::Zero(dim_); }
Vector CostFunction::l2_or_zero() const { return l2_.size() > 0 ? l2_ : Vector::Zero(dim_); }

QuadraticForm CostFunction::hessian() const {
  if (q_.size() > 0) {
    Matrix h = 2.0 * q_;
    if (l2_.size() > 0) h.diagonal() += 2.0 * l2_;
    return QuadraticForm::dense(std::move(h));
  }
  if (l2_.size() > 0) return QuadraticForm::diagonal(2.0 * l2_);
  return QuadraticForm::zero(dim_);
}

json CostFunction::to_json() const {
  switch (variant_) {
    case Variant::L1:
    case Variant::L2:
      return json{{"variant", variant_ == Variant::L1 ? "l1" : "l2"}, {"weights", detail::vector_to_json(weights_)}};
    case Variant::Quadratic:
      if (grid_)
        return json{{"variant", "quadratic"},
                    {"q_matrix",
                     {{"grid", {grid_->height, grid_->width}}, {"diag", grid_->diag}, {"neighbor", grid_->neighbor}}}};
      return json{{"variant", "quadratic"}, {"q_matrix", detail::matrix_to_json(q_input_)}};
    case Variant::Combination: {
      json terms = json::array();
      for (const auto& [coef, term] : terms_) terms.push_back({{"coefficient", coef}, {"cost", term->to_json()}});
      return json{{"variant", "combination"}, {"terms", std::move(terms)}};
    }
  }
  return json();
}

CostFunction cost_from_json(const json& doc, int dim) {
  try {
    if (doc.is_string()) return cost_from_json(json{{"variant", doc}}, dim);
    if (!doc.is_object()) throw Error(ErrorCode::MalformedDocument, "cost must be an object");
    const auto variant = doc.value("variant", std::string("l2"));
    std::optional<Vector> weights;
    if (doc.contains("weights") && !doc["weights"].is_null()) weights = detail::vector_from_json(doc["weights"]);
    if (variant == "l2") return CostFunction::l2(dim, weights);
    if (variant == "l1") return CostFunction::l1(dim, weights);
    if (variant == "quadratic") {
      const auto& qm = doc.at("q_matrix");
      if (qm.is_object()) {
        CostFunction::GridShorthand g;
        g.height = qm.at("grid").at(0).get<int>();
        g.width = qm.at("grid").at(1).get<int>();
        g.diag = qm.value("diag", 1.0);
        g.neighbor = qm.value("neighbor", -0.25);
        if (g.height * g.width != dim)
          throw Error(ErrorCode::DimensionMismatch, "grid shorthand does not cover the feature space");
        return CostFunction::grid(g);
      }
      Matrix q = detail::matrix_from_json(qm, dim);
      if (q.rows() != dim) throw Error(ErrorCode::DimensionMismatch, "Q must be D x D");
      return CostFunction::quadratic(std::move(q));
    }
    if (variant == "combination" || variant == "combo") {
      std::vector<CostTerm> terms;
      for (const auto& t : doc.at("terms")) {
        const double coef = t.value("coefficient", 1.0);
        terms.push_back({coef, cost_from_json(t.contains("cost") ? t["cost"] : t, dim)});
      }
      return CostFunction::combination(terms);
    }
    throw Error(ErrorCode::MalformedDocument, "unknown cost variant '" + variant + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
}

LoweredCost lower_to_program(const CostFunction& cost, const Vector& center) {
  const int D = cost.dim();
  if (center.size() != D) throw Error(ErrorCode::DimensionMismatch, "source instance has the wrong dimension");
  LoweredCost out;
  out.dim = D;
  const Vector l1 = cost.l1_or_zero();
  for (int d = 0; d < D; ++d)
    if (l1[d] > 0) out.aux_coord.push_back(d);
  const int n = out.num_vars();
  const int naux = n - D;

  const QuadraticForm hx = cost.hessian();
  out.hessian = naux > 0 ? hx.extended(n) : hx;
  out.linear = Vector::Zero(n);
  out.linear.head(D) = -hx.apply(center);
  out.constant = 0.5 * center.dot(hx.apply(center));

  out.rows = RowMatrix::Zero(2 * naux, n);
  out.rhs = Vector::Zero(2 * naux);
  for (int k = 0; k < naux; ++k) {
    const int d = out.aux_coord[static_cast<size_t>(k)];
    out.linear[D + k] = l1[d];
    out.rows(2 * k, D + k) = 1.0;
    out.rows(2 * k, d) = -1.0;
    out.rhs[2 * k] = -center[d];
    out.rows(2 * k + 1, D + k) = 1.0;
    out.rows(2 * k + 1, d) = 1.0;
    out.rhs[2 * k + 1] = center[d];
  }
  return out;
}

}  // namespace cftree

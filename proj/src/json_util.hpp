#pragma once

// Shared helpers for (de)serializing Eigen values; infinities travel as the
// strings "inf" / "-inf" since JSON has no literal for them.

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "cftree/error.hpp"
#include "cftree/feature_space.hpp"

namespace cftree::detail {

inline nlohmann::json number_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double number_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  if (j.is_null()) return std::nan("");
  throw Error(ErrorCode::MalformedDocument, "expected a number, got " + j.dump());
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number_to_json(v[i]));
  return out;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::MalformedDocument, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_from_json(j[i]);
  return v;
}

template <typename Derived>
nlohmann::json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number_to_json(m(r, c)));
    out.push_back(std::move(row));
  }
  return out;
}

// Row-major nested arrays; an empty array yields a 0 x cols matrix.
inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
  if (!j.is_array()) throw Error(ErrorCode::MalformedDocument, "expected a matrix (array of rows)");
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols)
      throw Error(ErrorCode::MalformedDocument, "matrix row has the wrong length");
    for (size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number_from_json(j[r][c]);
  }
  return m;
}

}  // namespace cftree::detail

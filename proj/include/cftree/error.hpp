#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cftree {

enum class ErrorCode {
  InvalidArgument,
  // feature space
  UnknownCategory,
  OutOfRangeValue,
  SchemaMismatch,
  NonIntegralBlock,
  // tree model
  DimensionMismatch,
  NotALeaf,
  EmptyTargetSet,
  MalformedDocument,
  CyclicStructure,
  BadWeightDimension,
  UnknownNodeReference,
  // costs and constraints
  NonPSDMatrix,
  ContradictoryConstraints,
  InvalidEpsilon,
  // solvers
  EmptyInterval,
  NoAdmissibleCategory,
  Infeasible,
  NumericalBreakdown,
  IterationLimit,
  NodeBudgetExceeded,
  NonSeparableCostOnSeparablePath,
  // fixtures
  DegenerateData,
  GenerationFailed,
  OracleTooLarge,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  // Request field the error refers to; empty when not attributed.
  const std::string& field() const noexcept { return field_; }
  Error with_field(std::string field) const {
    Error e(*this);
    e.field_ = std::move(field);
    return e;
  }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace cftree

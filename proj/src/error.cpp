#include "cftree/error.hpp"

namespace cftree {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::OutOfRangeValue: return "OutOfRangeValue";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::NonIntegralBlock: return "NonIntegralBlock";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotALeaf: return "NotALeaf";
    case ErrorCode::EmptyTargetSet: return "EmptyTargetSet";
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::CyclicStructure: return "CyclicStructure";
    case ErrorCode::BadWeightDimension: return "BadWeightDimension";
    case ErrorCode::UnknownNodeReference: return "UnknownNodeReference";
    case ErrorCode::NonPSDMatrix: return "NonPSDMatrix";
    case ErrorCode::ContradictoryConstraints: return "ContradictoryConstraints";
    case ErrorCode::InvalidEpsilon: return "InvalidEpsilon";
    case ErrorCode::EmptyInterval: return "EmptyInterval";
    case ErrorCode::NoAdmissibleCategory: return "NoAdmissibleCategory";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorCode::IterationLimit: return "IterationLimit";
    case ErrorCode::NodeBudgetExceeded: return "NodeBudgetExceeded";
    case ErrorCode::NonSeparableCostOnSeparablePath: return "NonSeparableCostOnSeparablePath";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::OracleTooLarge: return "OracleTooLarge";
  }
  return "Unknown";
}

}  // namespace cftree

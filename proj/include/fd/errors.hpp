#pragma once

#include <stdexcept>
#include <string>

namespace fd {

// Every failure the library raises carries one of these codes. The CLI maps
// Validation-category codes to exit 2 and Estimation-category codes to exit 3.
enum class ErrorCode {
  MissingColumn,
  NonBinaryTreatment,
  NonFiniteValue,
  DimensionMismatch,
  RowMismatch,
  TooManyFolds,
  UnsupportedKind,
  UnknownName,
  BadArgument,
  AllZeroWeights,
  DegenerateOutcome,
  SeparationDetected,
  EmptyTreatmentArm,
  InsufficientRowsInArm,
  SingularSystem,
};

enum class ErrorCategory { Validation, Estimation };

inline ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn:
    case ErrorCode::NonBinaryTreatment:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::RowMismatch:
    case ErrorCode::TooManyFolds:
    case ErrorCode::UnsupportedKind:
    case ErrorCode::UnknownName:
    case ErrorCode::BadArgument:
      return ErrorCategory::Validation;
    default:
      return ErrorCategory::Estimation;
  }
}

inline const char* name_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RowMismatch: return "RowMismatch";
    case ErrorCode::TooManyFolds: return "TooManyFolds";
    case ErrorCode::UnsupportedKind: return "UnsupportedKind";
    case ErrorCode::UnknownName: return "UnknownName";
    case ErrorCode::BadArgument: return "BadArgument";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::DegenerateOutcome: return "DegenerateOutcome";
    case ErrorCode::SeparationDetected: return "SeparationDetected";
    case ErrorCode::EmptyTreatmentArm: return "EmptyTreatmentArm";
    case ErrorCode::InsufficientRowsInArm: return "InsufficientRowsInArm";
    case ErrorCode::SingularSystem: return "SingularSystem";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(name_of(code)) + ": " + message), code_(code) {}

  ErrorCode code() const { return code_; }
  ErrorCategory category() const { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace fd

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bageval {

enum class ErrorCode {
  // cohort_core
  MissingColumn,
  DuplicateSession,
  NonFiniteAge,
  UnknownDiagnosisLabel,
  UnknownSexLabel,
  EmptySelection,
  // features
  DegenerateReference,
  ZeroInterval,
  UnknownModel,
  EmptyTrainingSet,
  // matching
  NoMatches,
  InvariantViolation,
  // classifiers
  SingleClassTraining,
  ColumnMismatch,
  // evaluation
  SingleClass,
  LengthMismatch,
  AllReplicatesDegenerate,
  AllZeroDifferences,
  EmptyAfterFilter,
  InsufficientTuples,
  // survival
  ZeroVarianceCovariate,
  NoEvents,
  NoComparablePairs,
  NotNested,
  // simulator
  InvalidConfig,
  // cli
  ConfigSchemaError,
  IoError,
};

/// Exit-code family an error belongs to (0 ok, 2 config, 3 data, 4 numerical).
enum class ErrorCategory { Config = 2, Data = 3, Numerical = 4 };

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DuplicateSession: return "DuplicateSession";
    case ErrorCode::NonFiniteAge: return "NonFiniteAge";
    case ErrorCode::UnknownDiagnosisLabel: return "UnknownDiagnosisLabel";
    case ErrorCode::UnknownSexLabel: return "UnknownSexLabel";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::DegenerateReference: return "DegenerateReference";
    case ErrorCode::ZeroInterval: return "ZeroInterval";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::NoMatches: return "NoMatches";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::SingleClassTraining: return "SingleClassTraining";
    case ErrorCode::ColumnMismatch: return "ColumnMismatch";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::AllReplicatesDegenerate: return "AllReplicatesDegenerate";
    case ErrorCode::AllZeroDifferences: return "AllZeroDifferences";
    case ErrorCode::EmptyAfterFilter: return "EmptyAfterFilter";
    case ErrorCode::InsufficientTuples: return "InsufficientTuples";
    case ErrorCode::ZeroVarianceCovariate: return "ZeroVarianceCovariate";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::NoComparablePairs: return "NoComparablePairs";
    case ErrorCode::NotNested: return "NotNested";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ConfigSchemaError: return "ConfigSchemaError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

constexpr ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::ConfigSchemaError:
    case ErrorCode::UnknownModel:
      return ErrorCategory::Config;
    case ErrorCode::DegenerateReference:
    case ErrorCode::ZeroVarianceCovariate:
    case ErrorCode::AllReplicatesDegenerate:
    case ErrorCode::NoComparablePairs:
      return ErrorCategory::Numerical;
    default:
      return ErrorCategory::Data;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::optional<std::size_t> row = std::nullopt)
      : std::runtime_error(format(code, message, row)),
        code_(code),
        detail_(std::move(message)),
        row_(row) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }
  const std::string& detail() const noexcept { return detail_; }
  /// Zero-based data row (header excluded) for ingestion errors.
  std::optional<std::size_t> row() const noexcept { return row_; }

 private:
  static std::string format(ErrorCode code, const std::string& message,
                            std::optional<std::size_t> row) {
    std::string out(to_string(code));
    if (row) out += " at row " + std::to_string(*row);
    if (!message.empty()) out += ": " + message;
    return out;
  }

  ErrorCode code_;
  std::string detail_;
  std::optional<std::size_t> row_;
};

}  // namespace bageval

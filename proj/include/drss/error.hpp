#ifndef DRSS_ERROR_HPP
#define DRSS_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace drss {

enum class ErrorCode {
  DimensionMismatch,
  NonFiniteCovariate,
  MissingLabeledOutcome,
  EmptyLabeledSet,
  InvalidFoldCount,
  RankDeficientDesign,
  EmptyGrid,
  NumericallySingularGram,
  NoLabeledInTrainingFold,
  Separation,
  EmptyStratum,
  NonpositivePropensity,
  DegeneratePropensityOne,
  EmptyArmInTrainingFold,
  SingularJacobian,
  InvalidAlpha,
  CalibrationNotBracketed,
  InvalidSpec,
  SchemaViolation,
  ParseError,
  InvalidArgument,
};

inline std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (tests, CLI)
// can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteCovariate: return "NonFiniteCovariate";
    case ErrorCode::MissingLabeledOutcome: return "MissingLabeledOutcome";
    case ErrorCode::EmptyLabeledSet: return "EmptyLabeledSet";
    case ErrorCode::InvalidFoldCount: return "InvalidFoldCount";
    case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::NumericallySingularGram: return "NumericallySingularGram";
    case ErrorCode::NoLabeledInTrainingFold: return "NoLabeledInTrainingFold";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::EmptyStratum: return "EmptyStratum";
    case ErrorCode::NonpositivePropensity: return "NonpositivePropensity";
    case ErrorCode::DegeneratePropensityOne: return "DegeneratePropensityOne";
    case ErrorCode::EmptyArmInTrainingFold: return "EmptyArmInTrainingFold";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::CalibrationNotBracketed: return "CalibrationNotBracketed";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace drss

#endif  // DRSS_ERROR_HPP

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qsb {

enum class ErrorCode {
  NotSymmetric,
  NegativeEigenvalue,
  NonPositiveTau,
  NonPositiveEigenvalue,
  DegreeTooLarge,
  NonMonotoneTime,
  SingularGramian,
  InvalidBounds,
  TooFewPoints,
  GridTooLarge,
  DimensionMismatch,
  NonPositiveEntry,
  NonPositiveDensity,
  TimeOutOfHorizon,
  QueryOutOfBounds,
  SingularQ,
  InvalidArgument,
  ConfigError,
  MissingSolve,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NegativeEigenvalue: return "NegativeEigenvalue";
    case ErrorCode::NonPositiveTau: return "NonPositiveTau";
    case ErrorCode::NonPositiveEigenvalue: return "NonPositiveEigenvalue";
    case ErrorCode::DegreeTooLarge: return "DegreeTooLarge";
    case ErrorCode::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorCode::SingularGramian: return "SingularGramian";
    case ErrorCode::InvalidBounds: return "InvalidBounds";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::GridTooLarge: return "GridTooLarge";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveEntry: return "NonPositiveEntry";
    case ErrorCode::NonPositiveDensity: return "NonPositiveDensity";
    case ErrorCode::TimeOutOfHorizon: return "TimeOutOfHorizon";
    case ErrorCode::QueryOutOfBounds: return "QueryOutOfBounds";
    case ErrorCode::SingularQ: return "SingularQ";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingSolve: return "MissingSolve";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// message is prefixed with the code name so CLI output stays greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& detail) {
  if (!condition) throw Error(code, detail);
}

}  // namespace qsb

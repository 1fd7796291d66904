#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hp {

// Every failure the pipeline can report. Names mirror the error kinds
// documented per module so callers can branch on them.
enum class ErrorCode {
  MalformedRow,
  UnmappedLabel,
  NonMonotonicTimestamp,
  UnimputableSeries,
  ZeroRowSum,
  NegativeShare,
  NoPlantForFuel,
  DimensionMismatch,
  UnknownPlant,
  InvalidParams,
  EmptyTrainingSet,
  MissingValuation,
  UnknownReceptor,
  NonFiniteValue,
  ShortHistory,
  ShapeMismatch,
  BetaOutOfRange,
  InsufficientData,
  DivergedLoss,
  ZeroNormalizer,
  InfeasibleSession,
  WindowTooLarge,
  SignalCoverageGap,
  DegenerateDistribution,
  Io,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hp

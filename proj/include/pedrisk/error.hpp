#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pedrisk {

enum class ErrorCode {
  MalformedRecord,
  OutOfBounds,
  NonMonotoneFrame,
  MissingField,
  DegenerateCalibration,
  DimensionMismatch,
  PointAtInfinity,
  NonPositiveLength,
  NonPositiveRate,
  TooShort,
  MissingPolygons,
  NoOverlap,
  ZeroHeading,
  EmptySpot,
  NoQualifyingScenes,
  OneSidedDistribution,
  SignalizedSpot,
  InvalidSpec,
  InvalidParameter,
  SchemaMismatch,
  IoFailure,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it to a machine-readable diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pedrisk

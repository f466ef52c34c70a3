#include "pedrisk/error.hpp"

namespace pedrisk {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::NonMonotoneFrame: return "NonMonotoneFrame";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::DegenerateCalibration: return "DegenerateCalibration";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::NonPositiveLength: return "NonPositiveLength";
    case ErrorCode::NonPositiveRate: return "NonPositiveRate";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::MissingPolygons: return "MissingPolygons";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::ZeroHeading: return "ZeroHeading";
    case ErrorCode::EmptySpot: return "EmptySpot";
    case ErrorCode::NoQualifyingScenes: return "NoQualifyingScenes";
    case ErrorCode::OneSidedDistribution: return "OneSidedDistribution";
    case ErrorCode::SignalizedSpot: return "SignalizedSpot";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

}  // namespace pedrisk

#pragma once

#include <stdexcept>
#include <string>

namespace geocloud {

enum class ErrorCode {
  DepthNearZero,
  DegenerateGeometry,
  RankDeficient,
  GaugeScaleZero,
  NotSymmetric,
  NotConverged,
  SingularSystem,
  PointAtInfinity,
  MissingObservation,
  DegenerateXi,
  AllDenominatorsZero,
  NoValidSubset,
  DegenerateSet,
  NotOrthogonal,
  EndpointOutOfBounds,
  ConstantProfile,
  EmptyInput,
  BudgetExceeded,
  NotEmbeddable,
  InsufficientCovisibility,
  EmptyData,
  GenerationFailed,
  ParseError,
  DimensionMismatch,
  IoError,
  InvalidArgument,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace geocloud

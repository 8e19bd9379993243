#pragma once

#include <stdexcept>
#include <string>

namespace imse {

enum class ErrorCode {
  SingularCovariance = 1,
  UnknownBlock,
  UnstableClosedLoop,
  DimensionMismatch,
  PowerCapExceeded,
  CallbackFailure,
  UnsupportedEstimator,
  DegenerateWeights,
  HorizonMismatch,
  MarginalEigenvalue,
  IllConditionedTransform,
  NoConvergence,
  NotDetectable,
  NotPSD,
  NoSplitAvailable,
  MarginalMonodromy,
  ValidationFailure,
  SingularStep,
  NumericalBlowup,
  ModeMismatch,
  NonFiniteState,
  InsufficientSamples,
  DimensionTooHigh,
  SchemaError,
  UnknownParameter,
  InvalidArgument,
  IoError,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace imse

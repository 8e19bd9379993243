#include "imse/errors.hpp"

namespace imse {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::UnknownBlock: return "UnknownBlock";
    case ErrorCode::UnstableClosedLoop: return "UnstableClosedLoop";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::PowerCapExceeded: return "PowerCapExceeded";
    case ErrorCode::CallbackFailure: return "CallbackFailure";
    case ErrorCode::UnsupportedEstimator: return "UnsupportedEstimator";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::HorizonMismatch: return "HorizonMismatch";
    case ErrorCode::MarginalEigenvalue: return "MarginalEigenvalue";
    case ErrorCode::IllConditionedTransform: return "IllConditionedTransform";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NotDetectable: return "NotDetectable";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::NoSplitAvailable: return "NoSplitAvailable";
    case ErrorCode::MarginalMonodromy: return "MarginalMonodromy";
    case ErrorCode::ValidationFailure: return "ValidationFailure";
    case ErrorCode::SingularStep: return "SingularStep";
    case ErrorCode::NumericalBlowup: return "NumericalBlowup";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::DimensionTooHigh: return "DimensionTooHigh";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::UnknownParameter: return "UnknownParameter";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace imse

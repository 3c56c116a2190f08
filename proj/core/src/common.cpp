#include "blindpaint/common.hpp"

namespace blindpaint {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidDistributionParams: return "InvalidDistributionParams";
    case ErrorKind::OddSpatialDim: return "OddSpatialDim";
    case ErrorKind::SpatialNotDivisible: return "SpatialNotDivisible";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::MissingForwardCache: return "MissingForwardCache";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::SourceTooSmall: return "SourceTooSmall";
    case ErrorKind::SpecInfeasible: return "SpecInfeasible";
    case ErrorKind::InsufficientSources: return "InsufficientSources";
    case ErrorKind::PairingMismatch: return "PairingMismatch";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::UnreadableImage: return "UnreadableImage";
    case ErrorKind::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorKind::NonMonotoneStep: return "NonMonotoneStep";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

}  // namespace blindpaint

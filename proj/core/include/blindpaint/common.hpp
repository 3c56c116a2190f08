// Error type shared by every blindpaint module.
#pragma once

#include <stdexcept>
#include <string>

namespace blindpaint {

enum class ErrorKind {
  ShapeMismatch,
  InvalidDistributionParams,
  OddSpatialDim,
  SpatialNotDivisible,
  InvalidConfig,
  MissingForwardCache,
  NonFiniteGradient,
  NonFiniteLoss,
  SourceTooSmall,
  SpecInfeasible,
  InsufficientSources,
  PairingMismatch,
  ImageTooSmall,
  UnreadableImage,
  IncompatibleCheckpoint,
  NonMonotoneStep,
  IoError,
  InvalidArgument,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace blindpaint

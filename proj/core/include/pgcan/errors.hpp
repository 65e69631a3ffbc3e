#pragma once

#include <stdexcept>
#include <string>

namespace pgcan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model, problem, or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix sizes that do not line up (e.g. unflatten length).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Query point outside the closed problem domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Requested derivative order is not available.
class UnsupportedOrderError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value in parameters or losses.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A parameter block contains NaN or Inf.
class NonFiniteParameterError : public NumericError {
 public:
  NonFiniteParameterError(const std::string& block)
      : NumericError("non-finite value in parameter block '" + block + "'"), block_(block) {}
  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

/// Physical parameter out of range (e.g. viscosity <= 0).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Sampling geometry is degenerate (rejection rate too low).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Reference lattice file is malformed or incomplete.
class CorruptReferenceError : public Error {
 public:
  using Error::Error;
};

/// Metric is not defined for the given inputs (e.g. zero reference norm).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace pgcan

#pragma once

#include <stdexcept>
#include <string>

namespace epiloc {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shape or channel-count disagreement between operands.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Kernel with even dimensions, or kernel larger than the signal.
class InvalidKernelError : public Error {
public:
  using Error::Error;
};

/// Negative soft-threshold.
class InvalidThresholdError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration (optics, architecture, solver or CLI options).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Index or coordinate outside its valid range.
class RangeError : public Error {
public:
  using Error::Error;
};

/// Numerical failure: degenerate operator, non-finite loss.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// backward() called with a cache that does not belong to the given network.
class ContractViolationError : public Error {
public:
  using Error::Error;
};

/// File-system and serialization errors.
class IoError : public Error {
public:
  using Error::Error;
};

class BadMagicError : public IoError {
public:
  using IoError::IoError;
};

class VersionMismatchError : public IoError {
public:
  using IoError::IoError;
};

class TruncatedFileError : public IoError {
public:
  using IoError::IoError;
};

class ShapeMismatchError : public IoError {
public:
  using IoError::IoError;
};

} // namespace epiloc

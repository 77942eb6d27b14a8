#pragma once

#include <stdexcept>
#include <string>

namespace monet {

// Root of every error the library throws. Callers that only care about
// "something went wrong" catch this; the subclasses exist so tests and the
// CLI can tell failure classes apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid architecture or run configuration (bad block plan, mismatched K).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller passed an out-of-range value (K < 2, sigma <= 0, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes disagree with what an operation or parameter set expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values detected where the computation requires finite ones.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// File is readable but not in a format/version we understand.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public IoError {
 public:
  using IoError::IoError;
};

class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace monet

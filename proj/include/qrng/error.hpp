#pragma once

#include <stdexcept>
#include <string>

namespace qrng {

// Base for every error the library raises. The CLI maps subclasses to exit
// codes: ValidationError -> 1, IoError -> 2, SecurityError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Calibration validity gate failures (saturation, poor linearity, ...).
class CalibrationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed QRAW capture (bad magic, truncated payload, bit depth).
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// Refusal to emit randomness: no certifiable entropy or stale calibration.
class SecurityError : public Error {
 public:
  using Error::Error;
};

}  // namespace qrng

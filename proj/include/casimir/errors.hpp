#pragma once

#include <stdexcept>
#include <string>

namespace casimir {

// Error hierarchy. The CLI maps each family onto a stable exit code:
// ConfigError -> 2, ContactError -> 3, DataError -> 4, ConvergenceError -> 5.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of a closed-form law (non-positive gap, etc).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Plates touched, or the static bending has no stable equilibrium.
class ContactError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& msg, std::string field = {})
      : Error(msg), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Input data cannot support the requested analysis.
class DataError : public Error {
 public:
  using Error::Error;
};

class IdentifiabilityError : public DataError {
 public:
  using DataError::DataError;
};

class DetectionError : public DataError {
 public:
  using DataError::DataError;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Normal matrix not invertible at the optimum.
class DegeneracyError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

}  // namespace casimir

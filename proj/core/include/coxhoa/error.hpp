#pragma once

#include <stdexcept>
#include <string>

namespace coxhoa {

// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input, infeasible configuration, or a violated precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Overflow, singular matrices, failed fits, undefined adjustments.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace coxhoa

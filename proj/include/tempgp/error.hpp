#pragma once

#include <stdexcept>
#include <string>

namespace tempgp {

// Base for every recoverable failure raised by the library. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration (unknown key value, bad model list, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data that violates a dataset invariant or an operation precondition.
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: factorization failures, optimizer failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  explicit NotPositiveDefinite(const std::string &what)
      : NumericalError("matrix is not positive definite: " + what) {}
};

namespace exit_code {
inline constexpr int kSuccess = 0;
inline constexpr int kConfig = 2;
inline constexpr int kData = 3;
inline constexpr int kNumerical = 4;
}  // namespace exit_code

}  // namespace tempgp

#pragma once

#include <stdexcept>
#include <string>

namespace ecdg {

// Bad input: malformed configs, out-of-range states, unnormalized tables.
// The CLI maps this family to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Instance too large for the requested exact method.
class SizeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Solver, training, or transport failure. The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ecdg

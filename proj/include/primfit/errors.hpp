#pragma once

#include <stdexcept>
#include <string>

namespace primfit {

/// Bad input: shapes, ranges, malformed files. Maps to CLI exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or divergence during estimation. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace primfit

#pragma once

#include <stdexcept>
#include <string>

namespace transmod {

// Bad user input: malformed files, invalid configuration, unusable horizon.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The numerics left the domain where the estimator is defined
// (vanishing risk-set intensity, nonpositive product-integral factor,
// singular information matrix).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace transmod

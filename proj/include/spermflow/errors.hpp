#pragma once

#include <stdexcept>
#include <string>

namespace spermflow {

// Bad user input: missing files, malformed records, invalid configuration.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Divergence or non-finite values produced during computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spermflow

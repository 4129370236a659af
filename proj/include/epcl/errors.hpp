#pragma once

#include <stdexcept>

// Error taxonomy shared across the library. The CLI maps these to exit codes:
// ConfigError -> 2, DataError -> 3, NumericError -> 4. Programming-contract
// violations (shape mismatch, bad index) use std::invalid_argument /
// std::out_of_range and surface as config errors at the CLI boundary.

namespace epcl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace epcl

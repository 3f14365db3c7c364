#pragma once

#include <stdexcept>

namespace prunix {

// Error categories mapped to CLI exit codes: config 1, data 2, numerics 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace prunix

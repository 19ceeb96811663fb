#pragma once

#include <stdexcept>
#include <string>

namespace propensity {

// Error categories map 1:1 onto CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
  static constexpr int exit_code = 1;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
  static constexpr int exit_code = 2;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
  static constexpr int exit_code = 3;
};

}  // namespace propensity

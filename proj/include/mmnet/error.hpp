#pragma once

#include <stdexcept>
#include <string>

namespace mmnet {

// Error families map onto CLI exit codes: config/usage -> 1, data -> 2,
// numerical -> 3.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mmnet

#pragma once

#include <stdexcept>
#include <string>

namespace agwm {

// Exit-code convention: 0 success, 1 usage, 2 data error, 3 numeric failure.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace agwm

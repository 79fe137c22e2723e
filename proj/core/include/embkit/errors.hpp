#pragma once

#include <stdexcept>
#include <string>

namespace embkit {

// Bad input data or contract violation. CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failure. CLI maps this to exit code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace embkit

#pragma once

#include <stdexcept>
#include <string>

namespace hornn {

// Bad configuration or inconsistent dimensions. The CLI maps these to exit 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class DimensionError : public ConfigError {
 public:
  explicit DimensionError(const std::string& what) : ConfigError(what) {}
};

// Malformed input file (FSQ1, model file, JSON config).
class FormatError : public ConfigError {
 public:
  explicit FormatError(const std::string& what) : ConfigError(what) {}
};

// Non-finite values during training or checking. The CLI maps these to exit 1.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hornn

#pragma once

#include <stdexcept>
#include <string>

namespace pprec {

// Exit codes used by the CLI; library code throws, main() maps.
enum class ErrorKind { config = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& message) : Error(ErrorKind::config, message) {}
};

class DataError : public Error {
public:
  explicit DataError(const std::string& message) : Error(ErrorKind::data, message) {}
};

// Shape mismatches, non-scalar losses, out-of-range bins, NaN losses.
class NumericError : public Error {
public:
  explicit NumericError(const std::string& message) : Error(ErrorKind::numeric, message) {}
};

}  // namespace pprec

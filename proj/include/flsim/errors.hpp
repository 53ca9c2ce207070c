#pragma once

#include <stdexcept>
#include <string>

namespace flsim {

// Error categories map onto CLI exit codes: Config -> 2, Data -> 3,
// Runtime -> 4.  Everything thrown by the library derives from Error so the
// CLI can translate without a catch-all per subsystem.
enum class ErrorKind { Config, Data, Runtime };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

// Malformed or contradictory experiment configuration.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};

// Problems with dataset content: missing classes, bad rows, empty inputs.
class DataError : public Error {
public:
  explicit DataError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

// Corrupt or mismatched serialized artifacts (bad magic, version, CRC).
class FormatError : public Error {
public:
  explicit FormatError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

// A request exceeds what the generator or federation can produce.
class CapacityError : public Error {
public:
  explicit CapacityError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

// Dimension mismatches between models, gradients, or data matrices.
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& msg) : Error(ErrorKind::Runtime, msg) {}
};

// Contract violations on scalar arguments (thresholds, rates, counts).
class InvalidArgument : public Error {
public:
  explicit InvalidArgument(const std::string& msg) : Error(ErrorKind::Runtime, msg) {}
};

inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Runtime: return 4;
  }
  return 4;
}

}  // namespace flsim

#pragma once

#include <stdexcept>
#include <string>

namespace mrwlab {

// Failure categories; the CLI maps them onto process exit codes.
enum class ErrorKind {
  kConfig,          // malformed configuration or arguments
  kModel,           // model description violates an invariant
  kNonConvergence,  // truncation or bracket did not close within limits
  kIdentity,        // a verified identity fell outside tolerance
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what)
      : Error(ErrorKind::kModel, what) {}
};

class NonConvergenceError : public Error {
 public:
  explicit NonConvergenceError(const std::string& what)
      : Error(ErrorKind::kNonConvergence, what) {}
};

class IdentityError : public Error {
 public:
  explicit IdentityError(const std::string& what)
      : Error(ErrorKind::kIdentity, what) {}
};

}  // namespace mrwlab

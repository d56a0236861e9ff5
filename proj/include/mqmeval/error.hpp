#pragma once

#include <stdexcept>
#include <string>

namespace mqmeval {

// Exception hierarchy. The CLI maps each branch to an exit code:
// ConfigError -> 1, DataError -> 2, GatewayError -> 3.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration, bad arguments, unknown enum names.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Model endpoint failures, replay misses, missing capabilities.
class GatewayError : public Error {
 public:
  explicit GatewayError(const std::string& what, int status = 0, std::string body = {})
      : Error(what), status_(status), body_(std::move(body)) {}

  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

class CapabilityError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

}  // namespace mqmeval

#pragma once

#include <stdexcept>
#include <string>

namespace nerh {

/// Base class for every error raised by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (dataset, config, predictions file).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a cross-record invariant (dangling id, duplicate).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Internal contract between two values does not hold (e.g. a match that
/// references elements missing from the list it is applied to).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0, int attempts = 1)
      : Error(what), status_(status), attempts_(attempts) {}
  int status() const noexcept { return status_; }
  int attempts() const noexcept { return attempts_; }

 private:
  int status_;
  int attempts_;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// Strict replay found no recorded exchange for a request key.
class MissingFixture : public Error {
 public:
  explicit MissingFixture(std::string key)
      : Error("no recorded exchange for key " + key), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class VersionConflict : public Error {
 public:
  VersionConflict(const std::string& what, int current)
      : Error(what), current_(current) {}
  int current_version() const noexcept { return current_; }

 private:
  int current_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace nerh

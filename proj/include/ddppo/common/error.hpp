#pragma once

#include <stdexcept>
#include <string>

namespace ddppo {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad dimensions, out-of-range hyperparameters, malformed config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected in an intermediate; `tensor()` names the offender.
class NumericalError : public Error {
 public:
  NumericalError(std::string tensor, const std::string& what)
      : Error(what + " (tensor: " + tensor + ")"), tensor_(std::move(tensor)) {}

  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

// Misuse of a stateful protocol (stepping a finished episode, bad framing).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class InvalidCellError : public Error {
 public:
  using Error::Error;
};

class InfeasibleConstraintError : public Error {
 public:
  using Error::Error;
};

class InvalidEpisodeError : public Error {
 public:
  using Error::Error;
};

// Connection-level failure. Callers may retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Unrecoverable job-level failure (duplicate rank, peer lost, timeout).
class FatalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddppo

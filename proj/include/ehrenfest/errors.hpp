#pragma once

#include <stdexcept>
#include <string>

namespace ehrenfest {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Rejected construction or call arguments (parameter validation).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A non-finite value entered or was produced by the dynamics.
class InvalidState : public Error {
 public:
  using Error::Error;
};

/// The adaptive step size underflowed min_step before reaching t_end.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& msg, double time_reached)
      : Error(msg), time_reached_(time_reached) {}
  double time_reached() const noexcept { return time_reached_; }

 private:
  double time_reached_;
};

/// The step budget (max_steps) was exhausted.
class ResourceLimit : public Error {
 public:
  ResourceLimit(const std::string& msg, double time_reached)
      : Error(msg), time_reached_(time_reached) {}
  double time_reached() const noexcept { return time_reached_; }

 private:
  double time_reached_;
};

/// Evaluation outside a trajectory's covered time span.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Too few usable data points for a requested fit.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// Filesystem or file-format failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Command-line usage error (unknown flag, malformed value, missing flag).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace ehrenfest

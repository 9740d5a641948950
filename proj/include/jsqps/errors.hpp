#pragma once

#include <stdexcept>
#include <string>

namespace jsqps {

/// Invalid user-supplied argument or configuration.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure broke down (singular system, out-of-range values,
/// lost monotonicity beyond tolerance).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested CDF never exceeds the target probability on its grid.
class SaturationError : public NumericalError {
 public:
  SaturationError(const std::string& what, double max_attained)
      : NumericalError(what), max_attained_(max_attained) {}

  double max_attained() const noexcept { return max_attained_; }

 private:
  double max_attained_;
};

/// A state space, grid or matrix would exceed the configured size bounds.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken internal invariant, e.g. rescheduling an event that was never
/// scheduled.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace jsqps

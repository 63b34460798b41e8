#pragma once

#include <stdexcept>
#include <string>

namespace leafwise {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the inputs was violated (bad sizes, nonpositive data, caps).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An iterative method hit its iteration or time cap.
class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Condition 0 < lambda0 < (psi1_minus)^2 / (4 psi2_plus) fails, or the
/// comparison quartic has no real positive root pair.
class Inadmissible : public Error {
 public:
  Inadmissible(const std::string& what, double margin)
      : Error(what), margin_(margin) {}
  /// Signed margin (psi1_minus)^2 - 4 lambda0 psi2_plus, or the discriminant deficit.
  double margin() const noexcept { return margin_; }

 private:
  double margin_;
};

/// The flow left the basin: positivity could not be kept, or the initial
/// datum is outside U1.
class BasinViolation : public Error {
 public:
  BasinViolation(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace leafwise

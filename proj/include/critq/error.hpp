#pragma once

#include <stdexcept>
#include <string>

namespace critq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: out-of-domain parameters, malformed config, estimand/model mismatch.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// ODE integration could not proceed (squeezing blow-up, step underflow).
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double t) : Error(what), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

// Fock-basis tail occupation exceeded its threshold.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, double t, double tail)
      : Error(what), time_(t), tail_(tail) {}
  double time() const { return time_; }
  double tail() const { return tail_; }

 private:
  double time_;
  double tail_;
};

// Eigensolve or finite-difference refinement did not converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace critq

#pragma once

#include <stdexcept>
#include <string>

namespace ckde {

// Base class for all library errors. The CLI maps the concrete type to an
// exit code, so keep the hierarchy flat.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition on an argument was violated (Im z <= 0, sigma <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A fixed-point solve did not reach its tolerance.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

// A modelling assumption (Gaussian-centred activation, PSD covariance) fails.
class AssumptionError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ckde

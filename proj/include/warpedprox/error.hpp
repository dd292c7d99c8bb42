#pragma once

#include <stdexcept>
#include <string>

namespace warpedprox {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Constants or schedules outside their admissible regime.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, or an inner solve that missed its tolerance.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, double residual = 0.0)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Disjoint Haugazeau cuts.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace warpedprox

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sgdflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a function (negative time, non-finite point).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Step scale h outside (0, 1), or horizon not an integer multiple of h.
class InvalidStepError : public Error {
 public:
  using Error::Error;
};

/// A momentum value of zero where the augmented form divides by it.
class DegenerateMomentumError : public Error {
 public:
  using Error::Error;
};

class NotPsdError : public Error {
 public:
  using Error::Error;
};

/// Requested quantity needs data the problem does not provide (e.g. Jacobians).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A path left the bounded region; carries the step index where it happened.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::int64_t step) : Error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace sgdflow

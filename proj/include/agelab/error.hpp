#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace agelab {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Bad user-facing configuration (CLI flags, config files).
class ValidationError : public Error {
 public:
  ValidationError(std::string flag, const std::string& what)
      : Error(flag + ": " + what), flag_(std::move(flag)) {}
  const std::string& flag() const noexcept { return flag_; }

 private:
  std::string flag_;
};

// An exponential would be evaluated above the configured cap.
class OverflowError : public Error {
 public:
  OverflowError(std::string source, double argument)
      : Error("exponent overflow in " + source + " (argument " + std::to_string(argument) + ")"),
        source_(std::move(source)),
        argument_(argument) {}
  const std::string& source() const noexcept { return source_; }
  double argument() const noexcept { return argument_; }

 private:
  std::string source_;
  double argument_;
};

// Discriminator coefficients ran away: the two samples are (nearly) separable.
class SeparationError : public Error {
 public:
  using Error::Error;
};

// Newton could not make progress (e.g. persistent overflow along the search direction).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double residual)
      : Error(what + " (residual estimate " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// One-dimensional search failed; carries the sampled objective profile.
class OptimizationError : public Error {
 public:
  OptimizationError(const std::string& what, std::vector<std::pair<double, double>> profile)
      : Error(what), profile_(std::move(profile)) {}
  const std::vector<std::pair<double, double>>& profile() const noexcept { return profile_; }

 private:
  std::vector<std::pair<double, double>> profile_;
};

class UnsupportedSetting : public Error {
 public:
  using Error::Error;
};

}  // namespace agelab

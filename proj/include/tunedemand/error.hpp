#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tunedemand {

/// Argument outside the mathematical domain of an operation (p > 1, t < 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Inputs whose shapes or settings do not fit together.
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Data failed a structural check. `details` carries offending ids or rows.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& what, std::vector<std::string> details = {})
      : std::runtime_error(what), details_(std::move(details)) {}
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  std::vector<std::string> details_;
};

/// An estimator failed: separation, divergence or degenerate data.
/// `trace` holds one entry per iteration when the fit was iterative.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, std::vector<double> trace = {})
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

class DegenerateFitError : public FitError {
 public:
  using FitError::FitError;
};

class PhaseSupportError : public FitError {
 public:
  using FitError::FitError;
};

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lookup of an id that the store does not hold.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Write that would overwrite different existing content.
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tunedemand

#pragma once

#include <stdexcept>
#include <string>

namespace risklab {

// Bad caller input (dimensions, non-finite entries, invalid parameters).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A spectral quantity is outside its stable-rank region.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required eigengap is below tolerance.
class EigengapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A local chart or section is evaluated outside its domain.
class OutOfChartError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A declared statistical model is inconsistent (e.g. covariance not PSD).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative fit failed to converge; carries diagnostics in the message.
class NonConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unexpected numerical behaviour (e.g. EM log-likelihood decrease).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration file problem; carries the offending 1-based line (0 = global).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace risklab

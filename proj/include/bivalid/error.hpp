#pragma once

#include <stdexcept>
#include <string>

namespace bivalid {

// Malformed or inconsistent input data. Maps to CLI exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Solver failure or other numerical breakdown. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace bivalid

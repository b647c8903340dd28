#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctscore {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state left the region where the model drift is defined.
class InadmissibleStateError : public Error {
 public:
  InadmissibleStateError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Every particle weight underflowed (or was NaN) at one unit time.
class WeightCollapseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctscore

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deep2bsde {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or parameter-segment shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An experiment, architecture or schedule description is not usable.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An API was called out of contract (e.g. backward from a non-scalar).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for its inputs (e.g. relative error against zero).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// A simulated or rolled-out quantity became NaN/Inf.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step, std::size_t sample)
      : Error(what + " (time step " + std::to_string(step) + ", sample " +
              std::to_string(sample) + ")"),
        step_(step),
        sample_(sample) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t sample() const noexcept { return sample_; }

 private:
  std::size_t step_;
  std::size_t sample_;
};

}  // namespace deep2bsde

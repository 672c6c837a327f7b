#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace deep2bsde {

/// Learning-rate schedule gamma_m.
///
///   constant      gamma_m = initial
///   exp_decay     gamma_m = initial * factor^floor(m / period)
///   piecewise     gamma_m = values[i] for boundaries[i-1] <= m < boundaries[i]
struct LrSchedule {
  enum class Kind { constant, exp_decay, piecewise };

  Kind kind = Kind::constant;
  double initial = 1e-3;
  double factor = 1.0;
  std::size_t period = 1;
  std::vector<std::size_t> boundaries;
  std::vector<double> values;

  static LrSchedule constant(double rate);
  static LrSchedule exp_decay(double initial, double factor, std::size_t period);
  static LrSchedule piecewise(std::vector<std::size_t> boundaries, std::vector<double> values);

  /// Parses a preset name or an inline form:
  ///   "allen-cahn"    constant 1e-3
  ///   "hjb"           0.01 * 0.2^floor(m/1000)
  ///   "bsb"           1.0 * 0.5^floor(m/200)
  ///   "bsb-cnn"       2.0 * 0.5^floor(m/500)
  ///   "hjb-cnn"       0.01 for m < 1000, then 0.005
  ///   "constant:R", "exp:R0:F:P", "piecewise:V0,B1,V1,B2,V2,..."
  static LrSchedule parse(const std::string& text);

  double operator()(std::size_t m) const;

  std::string describe() const;
};

}  // namespace deep2bsde

#include "deep2bsde/schedule.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "deep2bsde/errors.hpp"

namespace deep2bsde {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) parts.push_back(item);
  return parts;
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw ConfigError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad number '" + s + "'");
  }
}

std::size_t parse_count(const std::string& s) {
  const double v = parse_double(s);
  if (v < 0 || v != std::floor(v)) throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

LrSchedule LrSchedule::constant(double rate) {
  if (!(rate > 0)) throw ConfigError("learning rate must be positive");
  LrSchedule s;
  s.kind = Kind::constant;
  s.initial = rate;
  return s;
}

LrSchedule LrSchedule::exp_decay(double initial, double factor, std::size_t period) {
  if (!(initial > 0) || !(factor > 0) || period == 0) throw ConfigError("invalid exp-decay schedule");
  LrSchedule s;
  s.kind = Kind::exp_decay;
  s.initial = initial;
  s.factor = factor;
  s.period = period;
  return s;
}

LrSchedule LrSchedule::piecewise(std::vector<std::size_t> boundaries, std::vector<double> values) {
  if (values.size() != boundaries.size() + 1) throw ConfigError("piecewise schedule needs one more value than boundaries");
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (boundaries[i] <= boundaries[i - 1]) throw ConfigError("piecewise boundaries must increase");
  }
  for (double v : values) {
    if (!(v > 0)) throw ConfigError("learning rate must be positive");
  }
  LrSchedule s;
  s.kind = Kind::piecewise;
  s.initial = values.front();
  s.boundaries = std::move(boundaries);
  s.values = std::move(values);
  return s;
}

LrSchedule LrSchedule::parse(const std::string& text) {
  if (text == "allen-cahn") return constant(1e-3);
  if (text == "hjb") return exp_decay(0.01, 0.2, 1000);
  if (text == "bsb") return exp_decay(1.0, 0.5, 200);
  if (text == "bsb-cnn") return exp_decay(2.0, 0.5, 500);
  if (text == "hjb-cnn") return piecewise({1000}, {0.01, 0.005});

  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "constant") return constant(parse_double(rest));
  if (kind == "exp") {
    auto p = split(rest, ':');
    if (p.size() != 3) throw ConfigError("exp schedule needs exp:R0:F:P");
    return exp_decay(parse_double(p[0]), parse_double(p[1]), parse_count(p[2]));
  }
  if (kind == "piecewise") {
    auto p = split(rest, ',');
    if (p.empty() || p.size() % 2 == 0) throw ConfigError("piecewise schedule needs V0,B1,V1,...");
    std::vector<double> values;
    std::vector<std::size_t> bounds;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (i % 2 == 0) {
        values.push_back(parse_double(p[i]));
      } else {
        bounds.push_back(parse_count(p[i]));
      }
    }
    return piecewise(std::move(bounds), std::move(values));
  }
  throw ConfigError("unknown learning-rate schedule '" + text + "'");
}

double LrSchedule::operator()(std::size_t m) const {
  switch (kind) {
    case Kind::constant:
      return initial;
    case Kind::exp_decay:
      return initial * std::pow(factor, static_cast<double>(m / period));
    case Kind::piecewise: {
      std::size_t i = 0;
      while (i < boundaries.size() && m >= boundaries[i]) ++i;
      return values[i];
    }
  }
  throw ConfigError("unknown learning-rate schedule kind");
}

std::string LrSchedule::describe() const {
  std::ostringstream out;
  out.precision(17);
  switch (kind) {
    case Kind::constant:
      out << "constant:" << initial;
      break;
    case Kind::exp_decay:
      out << "exp:" << initial << ':' << factor << ':' << period;
      break;
    case Kind::piecewise:
      out << "piecewise:";
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',' << boundaries[i - 1] << ',';
        out << values[i];
      }
      break;
  }
  return out.str();
}

}  // namespace deep2bsde

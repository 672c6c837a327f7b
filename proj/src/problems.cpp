#include "deep2bsde/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/ops.hpp"
#include "deep2bsde/rng.hpp"

namespace deep2bsde {

namespace {

double squared_norm(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

double trace(std::span<const double> s, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) acc += s[i * d + i];
  return acc;
}

std::optional<Reference> constant_reference(std::size_t dim, std::initializer_list<std::pair<std::size_t, double>> table) {
  for (const auto& [d, value] : table) {
    if (d == dim) return Reference{value, "external-constant"};
  }
  return std::nullopt;
}

Tensor squared(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * x[i];
  return out;
}

}  // namespace

ProblemSpec allen_cahn(std::size_t dim) {
  if (dim == 0) throw ConfigError("dimension must be at least 1");
  ProblemSpec p;
  p.name = "allen-cahn";
  p.dim = dim;
  p.horizon = 0.3;
  p.steps = 20;
  p.xi.assign(dim, 0.0);
  p.sigma_diag = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 1.0); };
  p.transition = [](double, double, std::span<const double> x, std::span<const double> w, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + w[i];
  };
  p.f = [](const NonlinearityArgs& a) {
    Var trace_term = ad::scale(ad::sum_rows(ad::diag(a.hessian)), -0.5);
    Var cubic = ad::unary(
        a.y, [](double y) { return -y + y * y * y; }, [](double y) { return -1.0 + 3.0 * y * y; });
    return ad::add(trace_term, cubic);
  };
  p.f_point = [dim](double, std::span<const double>, double y, std::span<const double>, std::span<const double> s) {
    return -0.5 * trace(s, dim) - y + y * y * y;
  };
  p.g = [](std::span<const double> x) { return 1.0 / (2.0 + 0.4 * squared_norm(x)); };
  p.reference = constant_reference(dim, {{20, 0.30879}, {256, 0.041531}, {400, 0.027106}});
  p.default_schedule = LrSchedule::constant(1e-3);
  return p;
}

double bsb_sigma_bar(double s, const BsbParams& params) { return s >= 0.0 ? params.sigma_max : params.sigma_min; }

ProblemSpec bsb(std::size_t dim, const BsbParams& params) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("Black-Scholes-Barenblatt needs an even dimension");
  if (!(params.sigma_min > 0) || !(params.sigma_min < params.sigma_max)) {
    throw ConfigError("Black-Scholes-Barenblatt needs 0 < sigma_min < sigma_max");
  }
  ProblemSpec p;
  p.name = "bsb";
  p.dim = dim;
  p.horizon = params.horizon;
  p.steps = 20;
  p.xi.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) p.xi[i] = i % 2 == 0 ? 1.0 : 0.5;
  const double sc = params.sigma_c;
  p.sigma_diag = [sc](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sc * x[i];
  };
  p.transition = [sc](double, double, std::span<const double> x, std::span<const double> w, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * (1.0 + sc * w[i]);
  };
  p.f = [params](const NonlinearityArgs& a) {
    Var vol = ad::unary(
        ad::diag(a.hessian),
        [params](double s) {
          const double v = bsb_sigma_bar(s, params);
          return v * v * s;
        },
        [params](double s) {
          const double v = bsb_sigma_bar(s, params);
          return v * v;
        });
    Var diffusion = ad::scale(ad::rowdot_const(vol, squared(a.x)), -0.5);
    Var discount = ad::scale(ad::sub(a.y, ad::rowdot_const(a.z, a.x)), params.rate);
    return ad::add(diffusion, discount);
  };
  p.f_point = [params, dim](double, std::span<const double> x, double y, std::span<const double> z,
                            std::span<const double> s) {
    double diffusion = 0.0;
    double xz = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double sii = s[i * dim + i];
      const double v = bsb_sigma_bar(sii, params);
      diffusion += x[i] * x[i] * v * v * sii;
      xz += x[i] * z[i];
    }
    return -0.5 * diffusion + params.rate * (y - xz);
  };
  p.g = [](std::span<const double> x) { return squared_norm(x); };
  p.reference = Reference{bsb_exact(0.0, p.xi, params), "closed-form"};
  p.default_schedule = LrSchedule::exp_decay(1.0, 0.5, 200);
  return p;
}

double bsb_exact(double t, std::span<const double> x, const BsbParams& params) {
  const double kappa = params.rate + params.sigma_max * params.sigma_max;
  return std::exp(kappa * (params.horizon - t)) * squared_norm(x);
}

std::vector<double> bsb_exact_gradient(double t, std::span<const double> x, const BsbParams& params) {
  const double h = bsb_exact_hessian_scale(t, params);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = h * x[i];
  return out;
}

double bsb_exact_hessian_scale(double t, const BsbParams& params) {
  const double kappa = params.rate + params.sigma_max * params.sigma_max;
  return 2.0 * std::exp(kappa * (params.horizon - t));
}

double bsb_exact_time_derivative(double t, std::span<const double> x, const BsbParams& params) {
  const double kappa = params.rate + params.sigma_max * params.sigma_max;
  return -kappa * bsb_exact(t, x, params);
}

ProblemSpec hjb(std::size_t dim) {
  if (dim == 0) throw ConfigError("dimension must be at least 1");
  ProblemSpec p;
  p.name = "hjb";
  p.dim = dim;
  p.horizon = 1.0;
  p.steps = 20;
  p.xi.assign(dim, 0.0);
  const double root2 = std::sqrt(2.0);
  p.sigma_diag = [root2](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), root2); };
  p.transition = [root2](double, double, std::span<const double> x, std::span<const double> w, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + root2 * w[i];
  };
  p.f = [](const NonlinearityArgs& a) {
    return ad::add(ad::scale(ad::sum_rows(ad::diag(a.hessian)), -1.0), ad::sum_squares_rows(a.z));
  };
  p.f_point = [dim](double, std::span<const double>, double, std::span<const double> z, std::span<const double> s) {
    return -trace(s, dim) + squared_norm(z);
  };
  p.g = [](std::span<const double> x) { return std::log(0.5 * (1.0 + squared_norm(x))); };
  p.reference = constant_reference(dim, {{100, 4.5901}, {256, 5.5393}, {400, 5.9877}});
  p.default_schedule = LrSchedule::exp_decay(0.01, 0.2, 1000);
  return p;
}

namespace {

struct Moments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
};

Moments combine(const Moments& a, const Moments& b) {
  if (a.count == 0.0) return b;
  if (b.count == 0.0) return a;
  Moments out;
  out.count = a.count + b.count;
  const double delta = b.mean - a.mean;
  out.mean = a.mean + delta * b.count / out.count;
  out.m2 = a.m2 + b.m2 + delta * delta * a.count * b.count / out.count;
  return out;
}

Moments combine_range(const std::vector<Moments>& parts, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return parts[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return combine(combine_range(parts, lo, mid), combine_range(parts, mid, hi));
}

}  // namespace

MonteCarloEstimate hjb_mc_reference(const TerminalFn& g, std::span<const double> x, double horizon,
                                    std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw ConfigError("Monte-Carlo oracle needs at least one sample");
  constexpr std::size_t chunk = 1u << 14;
  const std::size_t chunks = (samples + chunk - 1) / chunk;
  const std::size_t d = x.size();
  const double scale = std::sqrt(2.0 * horizon);
  std::vector<Moments> parts(chunks);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t cc = 0; cc < static_cast<std::int64_t>(chunks); ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    auto gen = make_stream(seed, {stream_tag::monte_carlo, c});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> point(d);
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(samples, begin + chunk);
    Moments m;
    for (std::size_t s = begin; s < end; ++s) {
      for (std::size_t i = 0; i < d; ++i) point[i] = x[i] + scale * normal(gen);
      const double e = std::exp(-g(point));
      m.count += 1.0;
      const double delta = e - m.mean;
      m.mean += delta / m.count;
      m.m2 += delta * (e - m.mean);
    }
    parts[c] = m;
  }
  const Moments total = combine_range(parts, 0, chunks);
  MonteCarloEstimate out;
  out.samples = samples;
  out.estimate = -std::log(total.mean);
  const double variance = samples > 1 ? total.m2 / (total.count - 1.0) : 0.0;
  out.std_error = std::sqrt(variance / total.count) / total.mean;
  return out;
}

MonteCarloEstimate hjb_mc_reference(std::size_t dim, std::size_t samples, std::uint64_t seed) {
  const ProblemSpec p = hjb(dim);
  return hjb_mc_reference(p.g, p.xi, p.horizon, samples, seed);
}

double relative_l1_error(double estimate, double reference) {
  if (reference == 0.0) throw UndefinedMetricError("relative error against a zero reference is undefined");
  return std::abs(estimate - reference) / std::abs(reference);
}

ProblemSpec make_problem(const std::string& name, std::size_t dim) {
  if (name == "allen-cahn") return allen_cahn(dim);
  if (name == "bsb") return bsb(dim);
  if (name == "hjb") return hjb(dim);
  throw ConfigError("unknown problem '" + name + "' (expected allen-cahn, bsb or hjb)");
}

}  // namespace deep2bsde

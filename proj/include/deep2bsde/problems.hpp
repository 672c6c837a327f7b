#pragma once

// Benchmark problems and their reference oracles.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deep2bsde/problem_spec.hpp"

namespace deep2bsde {

/// Allen-Cahn: T = 0.3, N = 20, xi = 0, g(x) = 1 / (2 + 0.4 |x|^2),
/// f = -1/2 Trace(S) - y + y^3, forward process X = xi + W.
ProblemSpec allen_cahn(std::size_t dim);

struct BsbParams {
  double rate = 0.05;
  double sigma_max = 0.4;
  double sigma_min = 0.1;
  double sigma_c = 0.4;
  double horizon = 1.0;
};

/// Volatility selector: sigma_max for s >= 0, sigma_min otherwise.
double bsb_sigma_bar(double s, const BsbParams& params);

/// Black-Scholes-Barenblatt: T = 1, N = 20, xi = (1, 1/2, 1, 1/2, ...),
/// g(x) = |x|^2, f = -1/2 sum x_i^2 sigma_bar(S_ii)^2 S_ii + r (y - <x, z>),
/// H(s, t, x, w)_i = x_i (1 + sigma_c w_i). `dim` must be even.
ProblemSpec bsb(std::size_t dim, const BsbParams& params = {});

/// Closed-form u(t, x) = exp((r + sigma_max^2)(T - t)) |x|^2 and its derivatives.
double bsb_exact(double t, std::span<const double> x, const BsbParams& params = {});
std::vector<double> bsb_exact_gradient(double t, std::span<const double> x, const BsbParams& params = {});
/// Hess u(t, x) = bsb_exact_hessian_scale(t) * I.
double bsb_exact_hessian_scale(double t, const BsbParams& params = {});
/// d/dt u(t, x).
double bsb_exact_time_derivative(double t, std::span<const double> x, const BsbParams& params = {});

/// Hamilton-Jacobi-Bellman: T = 1, N = 20, xi = 0, X = xi + sqrt(2) W,
/// g(x) = ln((1 + |x|^2) / 2), f = -Trace(S) + |z|^2, i.e. du/dt + Laplace(u) = |grad u|^2.
ProblemSpec hjb(std::size_t dim);

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Cole-Hopf representation u(0, x) = -ln E[exp(-g(x + sqrt(2) W_T))], with a
/// delta-method standard error. Samples are drawn in fixed chunks with their
/// own streams and combined in a fixed order, so the result does not depend on
/// the thread count.
MonteCarloEstimate hjb_mc_reference(const TerminalFn& g, std::span<const double> x, double horizon,
                                    std::size_t samples, std::uint64_t seed);

/// The HJB benchmark at xi = 0, T = 1.
MonteCarloEstimate hjb_mc_reference(std::size_t dim, std::size_t samples, std::uint64_t seed);

/// |estimate - reference| / |reference|. Throws UndefinedMetricError for a zero reference.
double relative_l1_error(double estimate, double reference);

/// Problem lookup by name: "allen-cahn", "bsb", "hjb".
ProblemSpec make_problem(const std::string& name, std::size_t dim);

}  // namespace deep2bsde

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deep2bsde/schedule.hpp"
#include "deep2bsde/tensor.hpp"

namespace deep2bsde {

/// Batched inputs of the nonlinearity f(t, x, y, z, S) on the tape.
struct NonlinearityArgs {
  double t;
  const Tensor& x;  // J x d, constant
  Var y;            // J x 1
  Var z;            // J x d
  Var hessian;      // J x d x d
};

using TapeNonlinearity = std::function<Var(const NonlinearityArgs&)>;

/// f evaluated at a single point; S is d x d row-major.
using PointNonlinearity = std::function<double(double t, std::span<const double> x, double y,
                                               std::span<const double> z, std::span<const double> s)>;

using TerminalFn = std::function<double(std::span<const double> x)>;

/// out = F(x) for a vector field on R^d.
using VectorField = std::function<void(std::span<const double> x, std::span<double> out)>;

/// out = H(s, t, x, w): one step of the forward process driven by the
/// Brownian increment w over [s, t].
using TransitionFn =
    std::function<void(double s, double t, std::span<const double> x, std::span<const double> w, std::span<double> out)>;

struct Reference {
  double value = 0.0;
  /// Where the value comes from, e.g. "external-constant", "closed-form",
  /// "monte-carlo".
  std::string provenance;
};

/// A PDE / 2BSDE instance
///   du/dt = f(t, x, u, grad u, Hess u) on [0, T) x R^d,  u(T, x) = g(x),
/// with forward process dX = mu(X) dt + sigma(X) dW and diagonal diffusion
/// sigma(x) = diag(sigma_diag(x)). The Y-recursion adds
/// 1/2 Trace(sigma sigma^T S) to f.
struct ProblemSpec {
  std::string name;
  std::size_t dim = 0;
  double horizon = 1.0;
  std::size_t steps = 20;
  std::vector<double> xi;

  /// Drift mu(x); empty means zero.
  VectorField drift;
  /// Diagonal of sigma(x).
  VectorField sigma_diag;
  /// Closed-form H(s, t, x, w). Empty means the Euler map x + mu(x)(t - s) + sigma(x) w.
  TransitionFn transition;

  TapeNonlinearity f;
  PointNonlinearity f_point;
  TerminalFn g;

  std::optional<Reference> reference;
  LrSchedule default_schedule;
};

}  // namespace deep2bsde

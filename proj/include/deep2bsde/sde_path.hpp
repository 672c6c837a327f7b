#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "deep2bsde/problem_spec.hpp"
#include "deep2bsde/tensor.hpp"

namespace deep2bsde {

/// 0 = t_0 < t_1 < ... < t_N = T with tau_j = t_j - t_{j-1}.
struct TimeGrid {
  std::vector<double> t;
  std::vector<double> tau;

  std::size_t steps() const noexcept { return tau.size(); }
  double horizon() const { return t.back(); }
};

/// t_n = n T / N.
TimeGrid uniform_grid(double horizon, std::size_t steps);

/// Brownian increments W_{t_{n+1}} - W_{t_n}, one J x N x d block.
struct BrownianBatch {
  Tensor increments;
  std::uint64_t seed = 0;

  std::size_t batch() const { return increments.dim(0); }
  std::size_t steps() const { return increments.dim(1); }
  std::size_t dim() const { return increments.dim(2); }
  /// Increments of step n as a J x d tensor.
  Tensor step(std::size_t n) const;
};

/// Gaussian increments with variance tau_{n+1} per coordinate. Sample j draws
/// from its own stream, so the batch is reproducible from `seed` and
/// independent of how the work is scheduled.
BrownianBatch sample_brownian(std::uint64_t seed, std::size_t batch, const TimeGrid& grid, std::size_t dim);

/// Sums `factor` consecutive increments: the same Brownian path seen on a grid
/// `factor` times coarser.
BrownianBatch coarsen(const BrownianBatch& fine, std::size_t factor);

/// Forward trajectories X_{t_0..t_N}, J x (N+1) x d.
struct PathBatch {
  Tensor states;
  BrownianBatch brownian;

  std::size_t batch() const { return states.dim(0); }
  std::size_t steps() const { return states.dim(1) - 1; }
  std::size_t dim() const { return states.dim(2); }
  /// X_{t_n} as J x d.
  Tensor state(std::size_t n) const;
  /// X_{t_{n+1}} - X_{t_n} as J x d.
  Tensor increment(std::size_t n) const;
};

/// X_0 = xi, X_{n+1} = H(t_n, t_{n+1}, X_n, dW_n). Throws DivergenceError on NaN/Inf.
PathBatch simulate(const ProblemSpec& problem, const TimeGrid& grid, const BrownianBatch& brownian);

/// Serial version of simulate, kept for tests and the benchmark.
PathBatch simulate_serial(const ProblemSpec& problem, const TimeGrid& grid, const BrownianBatch& brownian);

/// Debug dump: header `path_j,n,x_0,...,x_{d-1}` then one row per (j, n).
void write_paths_csv(const PathBatch& paths, std::ostream& out);

}  // namespace deep2bsde

#include "deep2bsde/sde_path.hpp"

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <vector>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/rng.hpp"

namespace deep2bsde {

TimeGrid uniform_grid(double horizon, std::size_t steps) {
  if (steps == 0) throw ConfigError("time grid needs at least one step");
  if (!(horizon > 0) || !std::isfinite(horizon)) throw ConfigError("time horizon must be positive");
  TimeGrid grid;
  grid.t.resize(steps + 1);
  grid.tau.resize(steps);
  for (std::size_t n = 0; n <= steps; ++n) grid.t[n] = static_cast<double>(n) * horizon / static_cast<double>(steps);
  grid.t[steps] = horizon;
  for (std::size_t n = 0; n < steps; ++n) grid.tau[n] = grid.t[n + 1] - grid.t[n];
  return grid;
}

Tensor BrownianBatch::step(std::size_t n) const {
  const std::size_t J = batch();
  const std::size_t N = steps();
  const std::size_t d = dim();
  if (n >= N) throw DimensionError("Brownian step index out of range");
  Tensor out(Shape{J, d});
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t i = 0; i < d; ++i) out[j * d + i] = increments[(j * N + n) * d + i];
  return out;
}

BrownianBatch sample_brownian(std::uint64_t seed, std::size_t batch, const TimeGrid& grid, std::size_t dim) {
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  const std::size_t N = grid.steps();
  BrownianBatch out{Tensor(Shape{batch, N, dim}), seed};
  auto data = out.increments.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t jj = 0; jj < static_cast<std::int64_t>(batch); ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    auto gen = make_stream(seed, {stream_tag::brownian, j});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t n = 0; n < N; ++n) {
      const double sd = std::sqrt(grid.tau[n]);
      for (std::size_t i = 0; i < dim; ++i) data[(j * N + n) * dim + i] = sd * normal(gen);
    }
  }
  return out;
}

BrownianBatch coarsen(const BrownianBatch& fine, std::size_t factor) {
  if (factor == 0 || fine.steps() % factor != 0) throw ConfigError("coarsening factor must divide the step count");
  const std::size_t J = fine.batch();
  const std::size_t N = fine.steps() / factor;
  const std::size_t d = fine.dim();
  BrownianBatch out{Tensor(Shape{J, N, d}), fine.seed};
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t k = 0; k < factor; ++k)
        for (std::size_t i = 0; i < d; ++i)
          out.increments[(j * N + n) * d + i] += fine.increments[(j * fine.steps() + n * factor + k) * d + i];
  return out;
}

Tensor PathBatch::state(std::size_t n) const {
  const std::size_t J = batch();
  const std::size_t N1 = steps() + 1;
  const std::size_t d = dim();
  if (n >= N1) throw DimensionError("path time index out of range");
  Tensor out(Shape{J, d});
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t i = 0; i < d; ++i) out[j * d + i] = states[(j * N1 + n) * d + i];
  return out;
}

Tensor PathBatch::increment(std::size_t n) const {
  const std::size_t J = batch();
  const std::size_t N1 = steps() + 1;
  const std::size_t d = dim();
  if (n + 1 >= N1) throw DimensionError("path increment index out of range");
  Tensor out(Shape{J, d});
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t i = 0; i < d; ++i)
      out[j * d + i] = states[(j * N1 + n + 1) * d + i] - states[(j * N1 + n) * d + i];
  return out;
}

namespace {

void check_inputs(const ProblemSpec& problem, const TimeGrid& grid, const BrownianBatch& brownian) {
  if (brownian.steps() != grid.steps()) throw DimensionError("Brownian batch and time grid disagree on step count");
  if (brownian.dim() != problem.dim || problem.xi.size() != problem.dim) {
    throw DimensionError("Brownian batch dimension does not match the problem");
  }
  if (!problem.transition && !problem.sigma_diag) throw ConfigError("problem has neither a transition map nor sigma");
}

/// Simulates sample j; returns the first step that produced a non-finite state, or N+1.
std::size_t simulate_sample(const ProblemSpec& problem, const TimeGrid& grid, const BrownianBatch& brownian,
                            std::size_t j, std::span<double> states) {
  const std::size_t N = grid.steps();
  const std::size_t d = problem.dim;
  std::vector<double> mu(d), sig(d);
  std::copy(problem.xi.begin(), problem.xi.end(), states.begin() + static_cast<std::ptrdiff_t>(j * (N + 1) * d));
  auto inc = brownian.increments.data();
  for (std::size_t n = 0; n < N; ++n) {
    std::span<const double> x = states.subspan((j * (N + 1) + n) * d, d);
    std::span<double> next = states.subspan((j * (N + 1) + n + 1) * d, d);
    std::span<const double> w = inc.subspan((j * N + n) * d, d);
    if (problem.transition) {
      problem.transition(grid.t[n], grid.t[n + 1], x, w, next);
    } else {
      problem.sigma_diag(x, sig);
      if (problem.drift) {
        problem.drift(x, mu);
      } else {
        std::fill(mu.begin(), mu.end(), 0.0);
      }
      for (std::size_t i = 0; i < d; ++i) next[i] = x[i] + mu[i] * grid.tau[n] + sig[i] * w[i];
    }
    for (double v : next) {
      if (!std::isfinite(v)) return n + 1;
    }
  }
  return N + 1;
}

}  // namespace

PathBatch simulate(const ProblemSpec& problem, const TimeGrid& grid, const BrownianBatch& brownian) {
  check_inputs(problem, grid, brownian);
  const std::size_t J = brownian.batch();
  const std::size_t N = grid.steps();
  PathBatch out{Tensor(Shape{J, N + 1, problem.dim}), brownian};
  std::vector<std::size_t> failed(J, N + 1);
  auto states = out.states.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t jj = 0; jj < static_cast<std::int64_t>(J); ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    failed[j] = simulate_sample(problem, grid, brownian, j, states);
  }
  for (std::size_t j = 0; j < J; ++j) {
    if (failed[j] <= N) throw DivergenceError("forward simulation produced a non-finite state", failed[j], j);
  }
  return out;
}

PathBatch simulate_serial(const ProblemSpec& problem, const TimeGrid& grid, const BrownianBatch& brownian) {
  check_inputs(problem, grid, brownian);
  const std::size_t J = brownian.batch();
  const std::size_t N = grid.steps();
  PathBatch out{Tensor(Shape{J, N + 1, problem.dim}), brownian};
  for (std::size_t j = 0; j < J; ++j) {
    const std::size_t f = simulate_sample(problem, grid, brownian, j, out.states.data());
    if (f <= N) throw DivergenceError("forward simulation produced a non-finite state", f, j);
  }
  return out;
}

void write_paths_csv(const PathBatch& paths, std::ostream& out) {
  const std::size_t J = paths.batch();
  const std::size_t N1 = paths.steps() + 1;
  const std::size_t d = paths.dim();
  out << "path_j,n";
  for (std::size_t i = 0; i < d; ++i) out << ",x_" << i;
  out << '\n';
  const auto prec = out.precision(17);
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t n = 0; n < N1; ++n) {
      out << j << ',' << n;
      for (std::size_t i = 0; i < d; ++i) out << ',' << paths.states[(j * N1 + n) * d + i];
      out << '\n';
    }
  }
  out.precision(prec);
}

}  // namespace deep2bsde

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/problems.hpp"
#include "deep2bsde/sde_path.hpp"

using namespace deep2bsde;

namespace {

ProblemSpec unit_diffusion(std::size_t dim, double horizon, std::size_t steps) {
  ProblemSpec p;
  p.name = "unit";
  p.dim = dim;
  p.horizon = horizon;
  p.steps = steps;
  p.xi.assign(dim, 0.0);
  p.sigma_diag = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 1.0); };
  return p;
}

}  // namespace

TEST_CASE("uniform grid") {
  const TimeGrid g = uniform_grid(0.3, 20);
  REQUIRE(g.steps() == 20);
  double total = 0;
  for (double tau : g.tau) {
    CHECK(tau == doctest::Approx(0.015).epsilon(1e-14));
    total += tau;
  }
  CHECK(std::abs(total - 0.3) <= 20 * std::numeric_limits<double>::epsilon());
  CHECK(g.t.front() == 0.0);
  CHECK(g.t.back() == 0.3);
  for (std::size_t n = 1; n < g.t.size(); ++n) CHECK(g.t[n] > g.t[n - 1]);

  const TimeGrid one = uniform_grid(1.0, 1);
  CHECK(one.t == std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(uniform_grid(1.0, 0), ConfigError);
  CHECK_THROWS_AS(uniform_grid(0.0, 3), ConfigError);
}

TEST_CASE("Brownian increments are reproducible and have the right moments") {
  const TimeGrid g = uniform_grid(0.3, 20);
  const BrownianBatch a = sample_brownian(7, 16, g, 3);
  const BrownianBatch b = sample_brownian(7, 16, g, 3);
  CHECK(a.increments.values() == b.increments.values());
  CHECK(sample_brownian(8, 16, g, 3).increments.values() != a.increments.values());

  const std::size_t J = 100000;
  const BrownianBatch big = sample_brownian(1, J, uniform_grid(0.015, 1), 1);
  double sum = 0, sq = 0;
  for (double w : big.increments.values()) {
    sum += w;
    sq += w * w;
  }
  const double mean = sum / J;
  const double var = (sq - J * mean * mean) / (J - 1);
  CHECK(var >= 0.0135);
  CHECK(var <= 0.0165);
  CHECK(std::abs(mean) <= 3.0 * std::sqrt(0.015 / J));
  CHECK_THROWS_AS(sample_brownian(1, 0, g, 2), ConfigError);
}

TEST_CASE("coarsening sums consecutive increments") {
  const TimeGrid g = uniform_grid(1.0, 4);
  const BrownianBatch fine = sample_brownian(3, 2, g, 2);
  const BrownianBatch coarse = coarsen(fine, 2);
  CHECK(coarse.steps() == 2);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 2; ++i)
        CHECK(coarse.increments.at({j, n, i}) ==
              doctest::Approx(fine.increments.at({j, 2 * n, i}) + fine.increments.at({j, 2 * n + 1, i})));
  CHECK_THROWS_AS(coarsen(fine, 3), ConfigError);
}

TEST_CASE("transition maps") {
  const TimeGrid g = uniform_grid(1.0, 5);
  SUBCASE("unit diffusion adds the increment") {
    const ProblemSpec p = unit_diffusion(2, 1.0, 5);
    const PathBatch paths = simulate(p, g, sample_brownian(1, 3, g, 2));
    for (std::size_t n = 0; n < 5; ++n) {
      const Tensor dx = paths.increment(n);
      const Tensor w = paths.brownian.step(n);
      for (std::size_t k = 0; k < dx.numel(); ++k) CHECK(dx[k] == doctest::Approx(w[k]).epsilon(1e-14));
    }
  }
  SUBCASE("allen-cahn has zero drift and unit diffusion") {
    const ProblemSpec p = allen_cahn(3);
    const PathBatch paths = simulate(p, g, sample_brownian(2, 3, g, 3));
    const Tensor dx = paths.increment(2);
    const Tensor w = paths.brownian.step(2);
    for (std::size_t k = 0; k < dx.numel(); ++k) CHECK(dx[k] == doctest::Approx(w[k]).epsilon(1e-14));
  }
  SUBCASE("hjb scales the increment by sqrt 2") {
    const ProblemSpec p = hjb(4);
    const PathBatch paths = simulate(p, g, sample_brownian(3, 3, g, 4));
    const Tensor dx = paths.increment(1);
    const Tensor w = paths.brownian.step(1);
    for (std::size_t k = 0; k < dx.numel(); ++k) CHECK(dx[k] == doctest::Approx(std::sqrt(2.0) * w[k]).epsilon(1e-13));
  }
  SUBCASE("bsb is multiplicative") {
    const ProblemSpec p = bsb(4);
    const PathBatch paths = simulate(p, g, sample_brownian(4, 3, g, 4));
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(paths.states.at({j, 0, i}) == p.xi[i]);
        const double x = paths.states.at({j, 2, i});
        const double w = paths.brownian.increments.at({j, 2, i});
        CHECK(paths.states.at({j, 3, i}) == doctest::Approx(x * (1.0 + 0.4 * w)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("driftless unit diffusion has covariance T I") {
  const double T = 0.7;
  const std::size_t J = 100000;
  const TimeGrid g = uniform_grid(T, 4);
  const PathBatch paths = simulate(unit_diffusion(2, T, 4), g, sample_brownian(5, J, g, 2));
  const Tensor end = paths.state(4);
  double s00 = 0, s11 = 0, s01 = 0, m0 = 0, m1 = 0;
  for (std::size_t j = 0; j < J; ++j) {
    m0 += end[2 * j];
    m1 += end[2 * j + 1];
  }
  m0 /= J;
  m1 /= J;
  for (std::size_t j = 0; j < J; ++j) {
    const double a = end[2 * j] - m0, b = end[2 * j + 1] - m1;
    s00 += a * a;
    s11 += b * b;
    s01 += a * b;
  }
  s00 /= J - 1;
  s11 /= J - 1;
  s01 /= J - 1;
  const double var_bound = 3.0 * T * std::sqrt(2.0 / J);
  CHECK(std::abs(s00 - T) <= var_bound);
  CHECK(std::abs(s11 - T) <= var_bound);
  CHECK(std::abs(s01) <= 3.0 * T / std::sqrt(static_cast<double>(J)));
}

TEST_CASE("parallel and serial simulation agree exactly") {
  const ProblemSpec p = bsb(10);
  const TimeGrid g = uniform_grid(p.horizon, p.steps);
  const BrownianBatch w = sample_brownian(9, 257, g, 10);
  CHECK(simulate(p, g, w).states.values() == simulate_serial(p, g, w).states.values());
}

TEST_CASE("non-finite states raise a divergence error with the step") {
  ProblemSpec p = unit_diffusion(1, 1.0, 3);
  p.transition = [](double s, double, std::span<const double> x, std::span<const double>, std::span<double> out) {
    out[0] = s > 0.5 ? std::numeric_limits<double>::infinity() : x[0];
  };
  const TimeGrid g = uniform_grid(1.0, 3);
  try {
    simulate(p, g, sample_brownian(1, 2, g, 1));
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(e.step() == 3);
  }
  CHECK_THROWS_AS(simulate_serial(p, g, sample_brownian(1, 2, g, 1)), DivergenceError);
}

TEST_CASE("path dump CSV") {
  const ProblemSpec p = hjb(2);
  const TimeGrid g = uniform_grid(1.0, 2);
  const PathBatch paths = simulate(p, g, sample_brownian(1, 2, g, 2));
  std::ostringstream out;
  write_paths_csv(paths, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "path_j,n,x_0,x_1");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2 * 3);
}

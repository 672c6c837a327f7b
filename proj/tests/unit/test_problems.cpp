#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/ops.hpp"
#include "deep2bsde/problems.hpp"

using namespace deep2bsde;

namespace {

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

std::vector<double> identity(std::size_t d) {
  std::vector<double> s(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) s[i * d + i] = 1.0;
  return s;
}

}  // namespace

TEST_CASE("allen-cahn") {
  const ProblemSpec p = allen_cahn(20);
  CHECK(p.horizon == doctest::Approx(0.3));
  CHECK(p.steps == 20);
  CHECK(p.g(zeros(20)) == 0.5);
  CHECK(p.f_point(0.1, zeros(20), 0.0, zeros(20), zeros(400)) == 0.0);
  REQUIRE(p.reference);
  CHECK(p.reference->value == 0.30879);
  CHECK(allen_cahn(256).reference->value == 0.041531);
  CHECK(allen_cahn(400).reference->value == 0.027106);
  CHECK_FALSE(allen_cahn(7).reference.has_value());
  for (double y : {0.3, -1.7, 2.2}) {
    CHECK(p.f_point(0.0, zeros(20), -y, zeros(20), zeros(400)) == -p.f_point(0.0, zeros(20), y, zeros(20), zeros(400)));
  }
}

TEST_CASE("black-scholes-barenblatt") {
  const BsbParams params;
  CHECK(bsb_sigma_bar(0.0, params) == 0.4);
  CHECK(bsb_sigma_bar(-1e-9, params) == 0.1);
  const ProblemSpec p = bsb(100);
  CHECK(p.g(p.xi) == doctest::Approx(62.5).epsilon(1e-15));
  CHECK(p.xi[0] == 1.0);
  CHECK(p.xi[1] == 0.5);
  CHECK(p.f_point(0.0, p.xi, 1.0, zeros(100), zeros(100 * 100)) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK_THROWS_AS(bsb(3), ConfigError);

  CHECK(bsb_exact(1.0, p.xi) == doctest::Approx(p.g(p.xi)).epsilon(1e-15));
  CHECK(std::round(bsb_exact(0.0, p.xi) * 1e4) / 1e4 == 77.1049);
  CHECK(std::round(bsb_exact(0.0, bsb(256).xi) * 1e4) / 1e4 == 197.3885);
  CHECK(std::round(bsb_exact(0.0, bsb(400).xi) * 1e4) / 1e4 == 308.4195);
  CHECK(p.reference->provenance == "closed-form");
}

TEST_CASE("the closed-form bsb solution solves its PDE") {
  const std::size_t d = 6;
  const ProblemSpec p = bsb(d);
  const BsbParams params;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> t_dist(0.0, 1.0), x_dist(-2.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    const double t = t_dist(gen);
    std::vector<double> x(d);
    for (double& e : x) e = x_dist(gen);
    const double h = 1e-5;
    const double ut = (bsb_exact(t + h, x) - bsb_exact(t - h, x)) / (2 * h);
    const double u = bsb_exact(t, x);
    const auto grad = bsb_exact_gradient(t, x);
    std::vector<double> hess(d * d, 0.0);
    const double scale = bsb_exact_hessian_scale(t);
    for (std::size_t i = 0; i < d; ++i) hess[i * d + i] = scale;
    const double residual = ut - p.f_point(t, x, u, grad, hess);
    CHECK(std::abs(residual) <= 1e-6 * std::max(1.0, std::abs(u)));
    CHECK(bsb_exact_time_derivative(t, x) == doctest::Approx(ut).epsilon(1e-8));
    // Positive Hessian: sigma_bar picks sigma_max along the solution.
    CHECK(scale > 0.0);
    CHECK(bsb_sigma_bar(hess[0], params) == params.sigma_max);
  }
}

TEST_CASE("hamilton-jacobi-bellman") {
  const ProblemSpec p = hjb(100);
  CHECK(p.g(zeros(100)) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(p.f_point(0.0, zeros(100), 0.0, zeros(100), identity(100)) == -100.0);
  REQUIRE(p.reference);
  CHECK(p.reference->value == 4.5901);
  CHECK(hjb(256).reference->value == 5.5393);
  CHECK(hjb(400).reference->value == 5.9877);
  // du/dt + Laplace(u) = |grad u|^2 means f = -Trace(S) + |z|^2.
  std::vector<double> z(100, 0.0);
  z[0] = 3.0;
  CHECK(p.f_point(0.0, zeros(100), 0.0, z, zeros(100 * 100)) == 9.0);
}

TEST_CASE("hjb Monte-Carlo oracle") {
  const TerminalFn constant = [](std::span<const double>) { return 1.25; };
  const MonteCarloEstimate c = hjb_mc_reference(constant, zeros(3), 1.0, 1000, 1);
  CHECK(c.estimate == 1.25);
  CHECK(c.std_error == 0.0);

  const auto a = hjb_mc_reference(4, 20000, 5);
  const auto b = hjb_mc_reference(4, 20000, 5);
  CHECK(a.estimate == b.estimate);
  CHECK(a.std_error == b.std_error);

  const auto small = hjb_mc_reference(10, 10000, 2);
  const auto large = hjb_mc_reference(10, 1000000, 2);
  CHECK(small.std_error / large.std_error == doctest::Approx(10.0).epsilon(0.3));
  CHECK(std::abs(small.estimate - large.estimate) <= 4.0 * small.std_error);
}

TEST_CASE("relative L1 error") {
  CHECK(relative_l1_error(0.30879, 0.30879) == 0.0);
  CHECK(relative_l1_error(0.30852, 0.30879) == doctest::Approx(0.000874).epsilon(1e-3));
  CHECK(relative_l1_error(2.0 * 4.5901, 4.5901) == 1.0);
  CHECK_THROWS_AS(relative_l1_error(1.0, 0.0), UndefinedMetricError);
}

TEST_CASE("tape and point forms of f agree") {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> normal;
  for (const char* name : {"allen-cahn", "bsb", "hjb"}) {
    const std::size_t d = 4, J = 3;
    const ProblemSpec p = make_problem(name, d);
    Tensor x({J, d}), y({J, 1}), z({J, d}), s({J, d, d});
    for (Tensor* t : {&x, &y, &z, &s})
      for (double& v : t->data()) v = normal(gen);
    Tape tape;
    const Tensor f = p.f({0.2, x, tape.constant(y), tape.constant(z), tape.constant(s)}).value();
    REQUIRE(f.numel() == J);
    for (std::size_t j = 0; j < J; ++j) {
      const auto xs = x.data().subspan(j * d, d);
      const auto zs = z.data().subspan(j * d, d);
      const auto ss = s.data().subspan(j * d * d, d * d);
      INFO(name);
      CHECK(f[j] == doctest::Approx(p.f_point(0.2, xs, y[j], zs, ss)).epsilon(1e-13));
    }
  }
  CHECK_THROWS_AS(make_problem("heat", 2), ConfigError);
}

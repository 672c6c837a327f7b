#include <doctest.h>

#include <cmath>
#include <vector>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/nets.hpp"
#include "deep2bsde/ops.hpp"
#include "deep2bsde/problems.hpp"
#include "deep2bsde/schedule.hpp"
#include "deep2bsde/sde_path.hpp"
#include "deep2bsde/solver.hpp"

using namespace deep2bsde;

namespace {

// Y_0 = y0, Z_0 = z0 and constant G = g I, A = 0 at every step.
class FixedModel final : public RolloutModel {
 public:
  FixedModel(std::size_t dim, double y0, double z0, double g) : dim_(dim), y0_(y0), z0_(z0), g_(g) {}
  InitialValues initial(Tape& tape, std::size_t batch) override {
    return {tape.constant(Tensor::filled({batch, 1}, y0_)), tape.constant(Tensor::filled({batch, dim_}, z0_)),
            tape.constant(hessian(batch)), tape.constant(Tensor({batch, dim_}))};
  }
  StepValues step(Tape& tape, std::size_t, double, const Tensor& x) override {
    const std::size_t batch = x.dim(0);
    return {tape.constant(hessian(batch)), tape.constant(Tensor({batch, dim_}))};
  }

 private:
  Tensor hessian(std::size_t batch) const {
    Tensor h({batch, dim_, dim_});
    for (std::size_t j = 0; j < batch; ++j)
      for (std::size_t i = 0; i < dim_; ++i) h.at({j, i, i}) = g_;
    return h;
  }
  std::size_t dim_;
  double y0_, z0_, g_;
};

ProblemSpec frozen(std::size_t dim, TerminalFn g) {
  ProblemSpec p;
  p.name = "frozen";
  p.dim = dim;
  p.horizon = 1.0;
  p.steps = 1;
  p.xi.assign(dim, 0.0);
  p.sigma_diag = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  p.f = [](const NonlinearityArgs& a) { return ad::scale(a.y, 0.0); };
  p.g = std::move(g);
  return p;
}

double run_loss(RolloutModel& model, const ProblemSpec& p, const TimeGrid& grid, const PathBatch& paths) {
  Tape tape;
  return rollout(tape, model, p, grid, paths).loss.value().item();
}

std::vector<double> copy(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("frozen dynamics leave Y at Y_0") {
  const ProblemSpec p = frozen(2, [](std::span<const double> x) { return x[0] + 2.0 * x[1]; });
  const TimeGrid grid = uniform_grid(1.0, 1);
  const PathBatch paths = simulate(hjb(2), grid, sample_brownian(4, 8, grid, 2));
  FixedModel model(2, 0.75, 0.0, 0.0);
  Tape tape;
  const RolloutResult r = rollout(tape, model, p, grid, paths);
  double expected = 0;
  const Tensor end = paths.state(1);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(r.state.y.value()[j] == 0.75);
    const double mismatch = 0.75 - (end[2 * j] + 2.0 * end[2 * j + 1]);
    expected += mismatch * mismatch / 8.0;
  }
  CHECK(r.loss.value().item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("constant terminal value with frozen dynamics gives zero loss") {
  const ProblemSpec p = frozen(3, [](std::span<const double>) { return -1.5; });
  const TimeGrid grid = uniform_grid(1.0, 1);
  const PathBatch paths = simulate(hjb(3), grid, sample_brownian(1, 5, grid, 3));
  FixedModel model(3, -1.5, 0.0, 0.0);
  CHECK(run_loss(model, p, grid, paths) == 0.0);
}

TEST_CASE("allen-cahn single step by hand") {
  ProblemSpec p = allen_cahn(1);
  p.steps = 1;
  const TimeGrid grid = uniform_grid(p.horizon, 1);
  const PathBatch paths = simulate(p, grid, sample_brownian(2, 1, grid, 1));
  const double w = paths.brownian.increments[0];
  const double y0 = 0.4, z0 = -0.8;
  // G = 0.7 I: the trace terms of f and the generator cancel.
  FixedModel model(1, y0, z0, 0.7);
  Tape tape;
  const RolloutResult r = rollout(tape, model, p, grid, paths);
  const double y1 = y0 + (-y0 + y0 * y0 * y0) * 0.3 + z0 * w;
  CHECK(r.state.y.value()[0] == doctest::Approx(y1).epsilon(1e-14));
  CHECK(r.state.z.value()[0] == doctest::Approx(z0 + 0.7 * w).epsilon(1e-14));
  const double g1 = 1.0 / (2.0 + 0.4 * w * w);
  CHECK(r.loss.value().item() == doctest::Approx((y1 - g1) * (y1 - g1)).epsilon(1e-13));
}

TEST_CASE("exact-derivative bsb rollout loss shrinks as the grid is refined") {
  const std::size_t d = 10;
  const BsbParams params;
  const TimeGrid fine_grid = uniform_grid(1.0, 40);
  const BrownianBatch fine = sample_brownian(17, 1024, fine_grid, d);
  double previous = INFINITY;
  for (std::size_t n : {10, 20, 40}) {
    ProblemSpec p = bsb(d, params);
    p.steps = n;
    const TimeGrid grid = uniform_grid(1.0, n);
    const PathBatch paths = simulate(p, grid, coarsen(fine, 40 / n));
    BsbExactModel model(p, params);
    const double loss = run_loss(model, p, grid, paths);
    INFO("N = " << n << " loss " << loss);
    CHECK(loss <= previous);
    previous = loss;
  }
}

TEST_CASE("non-finite Y raises a divergence error") {
  const ProblemSpec p = allen_cahn(1);
  const TimeGrid grid = uniform_grid(p.horizon, p.steps);
  const PathBatch paths = simulate(p, grid, sample_brownian(1, 2, grid, 1));
  FixedModel model(1, 1e120, 0.0, 0.0);
  Tape tape;
  CHECK_THROWS_AS(rollout(tape, model, p, grid, paths), DivergenceError);
}

TEST_CASE("sgd examples") {
  ParamLayout layout;
  layout.append("theta", {1});
  TrainState s = make_train_state(ParamVector(layout, {1.0}), 0);
  CHECK(sgd_step(s, std::vector<double>{0.0}, 0.1).theta.values()[0] == 1.0);
  CHECK(sgd_step(s, std::vector<double>{2.0}, 0.1).theta.values()[0] == doctest::Approx(0.8).epsilon(1e-15));
  // Gradient of theta^2 with lr 0.4 shrinks theta by 0.2 each step.
  const double theta0 = 1.7;
  s = make_train_state(ParamVector(layout, {theta0}), 0);
  for (int m = 1; m <= 10; ++m) {
    const double g = 2.0 * s.theta.values()[0];
    s = sgd_step(std::move(s), std::vector<double>{g}, 0.4);
    CHECK(std::abs(s.theta.values()[0] - theta0 * std::pow(0.2, m)) <= 1e-12);
  }
}

TEST_CASE("adam examples") {
  ParamLayout layout;
  layout.append("theta", {2});
  const TrainState s = make_train_state(ParamVector(layout, {0.5, -0.25}), 0);
  const TrainState same = adam_step(s, std::vector<double>{0.0, 0.0}, 0.1);
  CHECK(copy(same.theta.values()) == copy(s.theta.values()));

  ParamLayout one;
  one.append("theta", {1});
  const TrainState first = adam_step(make_train_state(ParamVector(one, {0.0}), 0), std::vector<double>{1.0}, 0.1);
  CHECK(std::abs(first.first_moment[0] - 0.1) <= 1e-12);
  CHECK(std::abs(first.second_moment[0] - 0.001) <= 1e-12);
  CHECK(std::abs(first.theta.values()[0] - (-0.1 * 0.1 / (1e-8 + std::sqrt(0.001)))) <= 1e-12);
  CHECK(first.theta.values()[0] == doctest::Approx(-0.31622).epsilon(1e-5));
  CHECK(first.step == 1);

  const TrainState pow = adam_step(s, std::vector<double>{-2.0, 3.0}, 0.1);
  CHECK(std::abs(pow.second_moment[0] - 0.001 * 4.0) <= 1e-15);
  CHECK(std::abs(pow.second_moment[1] - 0.001 * 9.0) <= 1e-15);

  // Two hand-computed steps.
  TrainState t = make_train_state(ParamVector(one, {1.0}), 0);
  double m = 0, v = 0, theta = 1.0;
  for (double g : {0.5, -1.5}) {
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta -= 0.01 * m / (1e-8 + std::sqrt(v));
    t = adam_step(std::move(t), std::vector<double>{g}, 0.01);
    CHECK(std::abs(t.theta.values()[0] - theta) <= 1e-12);
  }

  AdamParams corrected;
  corrected.bias_correction = true;
  const TrainState bc = adam_step(make_train_state(ParamVector(one, {0.0}), 0), std::vector<double>{1.0}, 0.1, corrected);
  CHECK(bc.theta.values()[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("optimizer steps are pure") {
  ParamLayout layout;
  layout.append("theta", {3});
  const TrainState s = make_train_state(ParamVector(layout, {1.0, 2.0, 3.0}), 4);
  const std::vector<double> g{0.3, -0.2, 0.1};
  const TrainState a = adam_step(s, g, 0.01);
  const TrainState b = adam_step(s, g, 0.01);
  CHECK(copy(a.theta.values()) == copy(b.theta.values()));
  CHECK(a.first_moment == b.first_moment);
  CHECK(copy(s.theta.values()) == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(s.first_moment == std::vector<double>(3, 0.0));
  CHECK(s.step == 0);
  const TrainState c = sgd_step(s, g, 0.5);
  CHECK(c.first_moment == s.first_moment);
  CHECK(copy(s.theta.values()) == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("learning-rate schedules") {
  const LrSchedule hjb_rate = LrSchedule::parse("hjb");
  CHECK(hjb_rate(0) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(hjb_rate(1000) == doctest::Approx(0.002).epsilon(1e-15));
  CHECK(hjb_rate(2500) == doctest::Approx(0.0004).epsilon(1e-15));
  CHECK(LrSchedule::parse("bsb")(400) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(LrSchedule::parse("bsb-cnn")(1000) == doctest::Approx(0.5).epsilon(1e-15));
  const LrSchedule cnn = LrSchedule::parse("hjb-cnn");
  CHECK(cnn(999) == 0.01);
  CHECK(cnn(1000) == 0.005);
  CHECK(LrSchedule::parse("allen-cahn")(4321) == 1e-3);
  CHECK(LrSchedule::parse("constant:0.25")(7) == 0.25);
  CHECK(LrSchedule::parse("exp:1:0.5:10")(25) == 0.25);
  const LrSchedule pw = LrSchedule::parse("piecewise:3,10,2,20,1");
  CHECK(pw(9) == 3.0);
  CHECK(pw(10) == 2.0);
  CHECK(pw(25) == 1.0);
  CHECK_THROWS_AS(LrSchedule::parse("cosine"), ConfigError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.steps = 1;
  CHECK_NOTHROW(c.validate());
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.batch = 4;
  c.adam.beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.adam.beta2 = 0.999;
  c.adam.eps = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_optimizer("sgd") == Optimizer::sgd);
  CHECK(optimizer_name(Optimizer::adam) == "adam");
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("training") {
  const ProblemSpec p = allen_cahn(2);
  const ArchSpec arch = MultiscaleSpec{2, {2, 3, 2, 3}};
  TrainConfig c;
  c.batch = 8;
  c.schedule = LrSchedule::parse("allen-cahn");

  SUBCASE("zero steps emit only the initial row") {
    c.steps = 0;
    std::vector<MetricsRow> rows;
    const TrainState s = train(p, arch, c, 3, [&](const MetricsRow& r) { rows.push_back(r); });
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].step == 0);
    CHECK(rows[0].u_estimate == init_params(arch, 3).values()[0]);
    CHECK(s.theta.values()[0] == rows[0].u_estimate);
    CHECK_FALSE(rows[0].rel_l1_error.has_value());
  }
  SUBCASE("identical seeds give identical metric streams") {
    c.steps = 6;
    c.eval_every = 4;
    auto collect = [&](std::uint64_t seed) {
      std::vector<std::pair<double, double>> out;
      std::vector<std::size_t> steps;
      train(p, arch, c, seed, [&](const MetricsRow& r) {
        out.emplace_back(r.u_estimate, r.loss);
        steps.push_back(r.step);
      });
      CHECK(steps == std::vector<std::size_t>{0, 4, 6});
      return out;
    };
    const auto a = collect(5);
    CHECK(a == collect(5));
    CHECK(a != collect(6));
  }
  SUBCASE("relative error is reported against the reference") {
    ProblemSpec q = allen_cahn(20);
    c.steps = 0;
    const ArchSpec wide = MultiscaleSpec{20, {2, 2, 2, 2}};
    std::vector<MetricsRow> rows;
    train(q, wide, c, 1, [&](const MetricsRow& r) { rows.push_back(r); });
    REQUIRE(rows[0].rel_l1_error);
    CHECK(*rows[0].rel_l1_error == doctest::Approx(relative_l1_error(rows[0].u_estimate, 0.30879)));
  }
}

#include "deep2bsde/solver.hpp"

#include <chrono>
#include <cmath>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/ops.hpp"
#include "deep2bsde/rng.hpp"

namespace deep2bsde {

InitialValues NetworkModel::initial(Tape&, std::size_t batch) {
  const ParamLayout& layout = net_.layout();
  auto block = [&](const char* name) { return ad::broadcast_batch(ad::slice(theta_, layout[name]), batch); };
  return {block("y0"), block("z0"), block("g0"), block("a0")};
}

StepValues NetworkModel::step(Tape& tape, std::size_t, double, const Tensor& x) {
  Var in = tape.constant(x);
  return {net_.eval_g(theta_, in), net_.eval_a(theta_, in)};
}

BsbExactModel::BsbExactModel(const ProblemSpec& problem, const BsbParams& params)
    : problem_(problem), params_(params) {}

InitialValues BsbExactModel::initial(Tape& tape, std::size_t batch) {
  const std::size_t d = problem_.dim;
  Tensor x(Shape{batch, d});
  for (std::size_t j = 0; j < batch; ++j)
    for (std::size_t i = 0; i < d; ++i) x[j * d + i] = problem_.xi[i];
  Tensor y = Tensor::filled(Shape{batch, 1}, bsb_exact(0.0, problem_.xi, params_));
  const std::vector<double> grad = bsb_exact_gradient(0.0, problem_.xi, params_);
  Tensor z(Shape{batch, d});
  for (std::size_t j = 0; j < batch; ++j)
    for (std::size_t i = 0; i < d; ++i) z[j * d + i] = grad[i];
  StepValues first = step(tape, 0, 0.0, x);
  return {tape.constant(std::move(y)), tape.constant(std::move(z)), first.g, first.a};
}

StepValues BsbExactModel::step(Tape& tape, std::size_t, double t, const Tensor& x) {
  const std::size_t J = x.dim(0);
  const std::size_t d = x.dim(1);
  const double h = bsb_exact_hessian_scale(t, params_);
  const double kappa = params_.rate + params_.sigma_max * params_.sigma_max;
  Tensor g(Shape{J, d, d});
  Tensor a(Shape{J, d});
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t i = 0; i < d; ++i) {
      g[(j * d + i) * d + i] = h;
      a[j * d + i] = -kappa * h * x[j * d + i];
    }
  }
  return {tape.constant(std::move(g)), tape.constant(std::move(a))};
}

namespace {

void check_finite(const Var& v, std::size_t n, const char* what) {
  const Tensor& t = v.value();
  const std::size_t per = t.numel() / t.dim(0);
  for (std::size_t k = 0; k < t.numel(); ++k) {
    if (!std::isfinite(t[k])) throw DivergenceError(std::string("rollout produced a non-finite ") + what, n, k / per);
  }
}

}  // namespace

RolloutResult rollout(Tape& tape, RolloutModel& model, const ProblemSpec& problem, const TimeGrid& grid,
                      const PathBatch& paths) {
  const std::size_t N = grid.steps();
  const std::size_t J = paths.batch();
  const std::size_t d = problem.dim;
  if (paths.steps() != N) throw DimensionError("paths and time grid disagree on step count");
  if (paths.dim() != d) throw DimensionError("paths do not match the problem dimension");

  using ad::operator+;
  InitialValues init = model.initial(tape, J);
  Var y = init.y;
  Var z = init.z;
  Var g = init.g;
  Var a = init.a;
  check_finite(y, 0, "Y");

  std::vector<double> sig(d);
  Tensor cov(Shape{J, d});
  for (std::size_t n = 0; n < N; ++n) {
    const Tensor x = paths.state(n);
    const Tensor dx = paths.increment(n);
    if (n > 0) {
      StepValues s = model.step(tape, n, grid.t[n], x);
      g = s.g;
      a = s.a;
    }
    for (std::size_t j = 0; j < J; ++j) {
      problem.sigma_diag(x.data().subspan(j * d, d), sig);
      for (std::size_t i = 0; i < d; ++i) cov[j * d + i] = sig[i] * sig[i];
    }
    const double tau = grid.tau[n];
    Var f = problem.f(NonlinearityArgs{grid.t[n], x, y, z, g});
    Var trace = ad::scale(ad::rowdot_const(ad::diag(g), cov), 0.5);
    y = y + ad::rowdot_const(z, dx) + ad::scale(f + trace, tau);
    z = z + ad::scale(a, tau) + ad::matvec_const(g, dx);
    check_finite(y, n + 1, "Y");
    check_finite(z, n + 1, "Z");
  }

  const Tensor xn = paths.state(N);
  Tensor target(Shape{J, 1});
  for (std::size_t j = 0; j < J; ++j) target[j] = problem.g(xn.data().subspan(j * d, d));
  return {{y, z}, ad::mean_squared_error(y, target)};
}

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string optimizer_name(Optimizer optimizer) { return optimizer == Optimizer::sgd ? "sgd" : "adam"; }

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  if (eval_every == 0) throw ConfigError("eval_every must be at least 1");
  if (runs == 0) throw ConfigError("runs must be at least 1");
  if (!(adam.beta1 > 0 && adam.beta1 < 1) || !(adam.beta2 > 0 && adam.beta2 < 1)) {
    throw ConfigError("Adam decay rates must lie in (0, 1)");
  }
  if (!(adam.eps > 0)) throw ConfigError("Adam epsilon must be positive");
}

TrainState make_train_state(ParamVector theta, std::uint64_t seed) {
  TrainState s;
  s.first_moment.assign(theta.size(), 0.0);
  s.second_moment.assign(theta.size(), 0.0);
  s.theta = std::move(theta);
  s.seed = seed;
  return s;
}

namespace {

void check_gradient(const TrainState& state, std::span<const double> gradient) {
  if (gradient.size() != state.theta.size()) {
    throw DimensionError("gradient has " + std::to_string(gradient.size()) + " entries, theta has " +
                         std::to_string(state.theta.size()));
  }
}

}  // namespace

TrainState sgd_step(TrainState state, std::span<const double> gradient, double lr) {
  check_gradient(state, gradient);
  auto theta = state.theta.values();
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * gradient[i];
  ++state.step;
  return state;
}

TrainState adam_step(TrainState state, std::span<const double> gradient, double lr, const AdamParams& params) {
  check_gradient(state, gradient);
  if (state.first_moment.size() != gradient.size() || state.second_moment.size() != gradient.size()) {
    throw DimensionError("optimizer moments do not match theta");
  }
  ++state.step;
  double c1 = 1.0;
  double c2 = 1.0;
  if (params.bias_correction) {
    c1 = 1.0 - std::pow(params.beta1, static_cast<double>(state.step));
    c2 = 1.0 - std::pow(params.beta2, static_cast<double>(state.step));
  }
  auto theta = state.theta.values();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = gradient[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = params.beta1 * m + (1.0 - params.beta1) * g;
    v = params.beta2 * v + (1.0 - params.beta2) * g * g;
    theta[i] -= lr * (m / c1) / (params.eps + std::sqrt(v / c2));
  }
  return state;
}

std::uint64_t step_seed(std::uint64_t seed, std::size_t m) {
  auto gen = make_stream(seed, {stream_tag::training, m});
  return gen();
}

TrainState train(const ProblemSpec& problem, const ArchSpec& arch, const TrainConfig& config, std::uint64_t seed,
                 const MetricsSink& sink, std::size_t run) {
  config.validate();
  if (arch_dim(arch) != problem.dim) throw DimensionError("architecture and problem dimensions differ");
  const Network net(arch);
  const TimeGrid grid = uniform_grid(problem.horizon, config.time_steps ? config.time_steps : problem.steps);
  TrainState state = make_train_state(init_params(arch, seed), seed);
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t m = 0;; ++m) {
    const BrownianBatch brownian = sample_brownian(step_seed(seed, m), config.batch, grid, problem.dim);
    Tape tape;
    Var theta = tape.leaf(state.theta.as_tensor());
    NetworkModel model(net, theta);
    RolloutResult result;
    try {
      const PathBatch paths = simulate(problem, grid, brownian);
      result = rollout(tape, model, problem, grid, paths);
    } catch (const DivergenceError& e) {
      throw DivergenceError("run " + std::to_string(run) + ", training step " + std::to_string(m) + ": " + e.what(),
                            e.step(), e.sample());
    }

    const bool last = m == config.steps;
    if (sink && (m % config.eval_every == 0 || last)) {
      MetricsRow row;
      row.run = run;
      row.step = m;
      row.u_estimate = state.theta.values()[0];
      row.loss = result.loss.value().item();
      if (problem.reference && problem.reference->value != 0.0) {
        row.rel_l1_error = relative_l1_error(row.u_estimate, problem.reference->value);
      }
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      sink(row);
    }
    if (last) break;

    tape.backward(result.loss);
    const Tensor gradient = tape.gradient(theta);
    // The update producing theta_{m+1} uses gamma_{m+1}.
    const double lr = config.schedule(m + 1);
    state = config.optimizer == Optimizer::sgd ? sgd_step(std::move(state), gradient.data(), lr)
                                               : adam_step(std::move(state), gradient.data(), lr, config.adam);
  }
  return state;
}

}  // namespace deep2bsde

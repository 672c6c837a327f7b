#pragma once

// Forward Y/Z recursion, terminal-mismatch loss, optimizers and training.
//
//   Y_{n+1} = Y_n + <Z_n, dX_n> + (f(t_n, X_n, Y_n, Z_n, G_n) + 1/2 Trace(sigma sigma^T(X_n) G_n)) tau_n
//   Z_{n+1} = Z_n + A_n tau_n + G_n dX_n
//   loss    = mean_j (Y_N - g(X_N))^2

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deep2bsde/nets.hpp"
#include "deep2bsde/param_vector.hpp"
#include "deep2bsde/problem_spec.hpp"
#include "deep2bsde/problems.hpp"
#include "deep2bsde/schedule.hpp"
#include "deep2bsde/sde_path.hpp"
#include "deep2bsde/tensor.hpp"

namespace deep2bsde {

/// Y_0, Z_0 and the n = 0 approximations G_0, A_0, batched.
struct InitialValues {
  Var y;  // J x 1
  Var z;  // J x d
  Var g;  // J x d x d
  Var a;  // J x d
};

/// G_n and A_n for one time step.
struct StepValues {
  Var g;  // J x d x d
  Var a;  // J x d
};

/// Supplies the approximations the recursion consumes.
class RolloutModel {
 public:
  virtual ~RolloutModel() = default;
  virtual InitialValues initial(Tape& tape, std::size_t batch) = 0;
  /// Called for n >= 1 with the states X_{t_n} (J x d).
  virtual StepValues step(Tape& tape, std::size_t n, double t, const Tensor& x) = 0;
};

/// Network-backed model: initial block from theta at n = 0, shared networks after.
class NetworkModel final : public RolloutModel {
 public:
  NetworkModel(const Network& net, Var theta) : net_(net), theta_(theta) {}
  InitialValues initial(Tape& tape, std::size_t batch) override;
  StepValues step(Tape& tape, std::size_t n, double t, const Tensor& x) override;

 private:
  const Network& net_;
  Var theta_;
};

/// Exact derivatives of the Black-Scholes-Barenblatt solution plugged into the
/// recursion: Y_0 = u(0, xi), Z_0 = grad u(0, xi), G_n = Hess u(t_n, X_n),
/// A_n = d/dt grad u(t_n, X_n). grad u is linear in x, so the second-order
/// part of the generator applied to grad u vanishes.
class BsbExactModel final : public RolloutModel {
 public:
  BsbExactModel(const ProblemSpec& problem, const BsbParams& params);
  InitialValues initial(Tape& tape, std::size_t batch) override;
  StepValues step(Tape& tape, std::size_t n, double t, const Tensor& x) override;

 private:
  const ProblemSpec& problem_;
  BsbParams params_;
};

struct RolloutState {
  Var y;  // J x 1
  Var z;  // J x d
};

struct RolloutResult {
  RolloutState state;
  Var loss;  // scalar
};

/// Unrolls the recursion on `tape`. Throws DivergenceError naming the step and
/// sample of the first non-finite Y or Z.
RolloutResult rollout(Tape& tape, RolloutModel& model, const ProblemSpec& problem, const TimeGrid& grid,
                      const PathBatch& paths);

enum class Optimizer { sgd, adam };

Optimizer parse_optimizer(const std::string& name);
std::string optimizer_name(Optimizer optimizer);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Standard bias correction; off reproduces the plain moment updates.
  bool bias_correction = false;
};

struct TrainConfig {
  std::size_t batch = 64;
  std::size_t steps = 0;
  Optimizer optimizer = Optimizer::adam;
  LrSchedule schedule;
  AdamParams adam;
  std::size_t eval_every = 1;
  std::size_t runs = 10;
  /// Time steps N; 0 uses the problem default.
  std::size_t time_steps = 0;

  void validate() const;
};

struct TrainState {
  ParamVector theta;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t step = 0;
  /// Root of every stream drawn during training; together with `step` it is
  /// the complete generator state.
  std::uint64_t seed = 0;
};

TrainState make_train_state(ParamVector theta, std::uint64_t seed);

/// theta <- theta - lr * gradient.
TrainState sgd_step(TrainState state, std::span<const double> gradient, double lr);

/// m <- b1 m + (1 - b1) g;  M <- b2 M + (1 - b2) |g|^2;  theta <- theta - lr m / (eps + sqrt(M)).
TrainState adam_step(TrainState state, std::span<const double> gradient, double lr, const AdamParams& params = {});

struct MetricsRow {
  std::size_t run = 0;
  std::size_t step = 0;
  double u_estimate = 0.0;
  double loss = 0.0;
  std::optional<double> rel_l1_error;
  double seconds = 0.0;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

/// Seed of the Brownian batch drawn at training step m.
std::uint64_t step_seed(std::uint64_t seed, std::size_t m);

/// Runs config.steps optimizer updates starting from init_params(arch, seed).
/// Emits a row for every m that is a multiple of eval_every and for the final
/// m = steps; the row reports theta_m and the loss of the batch drawn at m.
TrainState train(const ProblemSpec& problem, const ArchSpec& arch, const TrainConfig& config, std::uint64_t seed,
                 const MetricsSink& sink, std::size_t run = 0);

}  // namespace deep2bsde

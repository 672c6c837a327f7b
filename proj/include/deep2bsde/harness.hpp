#pragma once

// Experiment protocol: repeated independent training runs, aggregation across
// runs, and the files written for each experiment.
//
// Output directory layout:
//   manifest.json      resolved config, reference, per-run status, file list
//   run_<r>.jsonl      one MetricsRow per line
//   run_<r>.ckpt       final parameters (see save_checkpoint)
//   aggregate.csv      statistics at the checkpoint steps (no wall-clock data)
//   timing.csv         mean seconds at the checkpoint steps
//   table.md           aggregate + timing as a markdown table
//   error_curve.csv    step, mean relative L1 error (when a reference exists)
//   loss_curve.csv     step, mean loss

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deep2bsde/nets.hpp"
#include "deep2bsde/problem_spec.hpp"
#include "deep2bsde/solver.hpp"

namespace deep2bsde {

struct RunConfig {
  std::string problem = "allen-cahn";
  std::size_t dim = 20;
  /// Problem overrides: "horizon" and, for bsb, "rate", "sigma_max",
  /// "sigma_min", "sigma_c".
  nlohmann::json problem_overrides = nlohmann::json::object();
  ArchSpec arch = MultiscaleSpec{20, {20, 30, 40, 50}};
  TrainConfig train;
  /// Schedule text as accepted by LrSchedule::parse; empty picks the default
  /// for the problem and architecture.
  std::string schedule;
  std::uint64_t seed = 1;
  /// Aggregate rows are written at multiples of this and at the last step.
  std::size_t checkpoint_every = 1000;
  /// Explicit reference value; overrides everything else.
  std::optional<double> reference;
  /// HJB without a tabulated constant: Monte-Carlo reference with this many
  /// samples (0 disables).
  std::size_t reference_samples = 10'000'000;
  std::uint64_t reference_seed = 7;
  std::filesystem::path out = "results";
};

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Default schedule name: allen-cahn, hjb / hjb-cnn, bsb / bsb-cnn.
std::string default_schedule_name(const std::string& problem, const ArchSpec& arch);

/// The fully concrete problem (overrides and reference applied) and schedule.
ProblemSpec resolve_problem(const RunConfig& config);
RunConfig resolve(RunConfig config);

struct RunFailure {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::string message;
};

struct ResultBundle {
  RunConfig config;
  std::optional<Reference> reference;
  /// rows[r] holds the metrics of run r in step order (possibly truncated by a failure).
  std::vector<std::vector<MetricsRow>> rows;
  std::vector<RunFailure> failures;
};

struct AggregateRow {
  std::size_t step = 0;
  std::size_t runs = 0;
  std::size_t missing = 0;
  double mean_u = 0.0;
  double std_u = 0.0;
  std::optional<double> mean_error;
  std::optional<double> std_error;
  double mean_loss = 0.0;
  double mean_seconds = 0.0;
};

/// Statistics over the runs that reached each requested step, with the
/// unbiased (n - 1) standard deviation (0 for a single run). Values are
/// sorted before summation, so the result does not depend on run order.
std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricsRow>>& rows,
                                    const std::vector<std::size_t>& steps);

/// 0, every, 2 every, ... and `last`.
std::vector<std::size_t> checkpoint_steps(std::size_t last, std::size_t every);

void write_aggregate_csv(const std::vector<AggregateRow>& rows, std::ostream& out);
void write_timing_csv(const std::vector<AggregateRow>& rows, std::ostream& out);
void write_table_markdown(const std::vector<AggregateRow>& rows, const std::string& title, std::ostream& out);

nlohmann::json to_json(const MetricsRow& row);

/// Log sink for progress lines; may be empty.
using Logger = std::function<void(const std::string&)>;

/// Runs config.train.runs trainings with seeds seed, seed + 1, ... and writes
/// the bundle to config.out. Divergent runs are recorded, not fatal.
ResultBundle run_experiment(const RunConfig& config, const Logger& log = {});

/// Writes error_curve.csv and loss_curve.csv into `dir` covering every step
/// present in the bundle. Returns warnings from the soft convergence check.
std::vector<std::string> emit_curves(const ResultBundle& bundle, const std::filesystem::path& dir);

struct ReferenceCheck {
  std::string name;
  double expected = 0.0;
  std::optional<double> computed;
  /// Acceptance band half-width.
  std::optional<double> tolerance;
  bool pass = false;
  std::string note;
};

struct VerifyOptions {
  std::size_t mc_samples = 10'000'000;
  std::uint64_t mc_seed = 2024;
  bool include_monte_carlo = true;
};

/// Recomputes the closed-form BSB values and the HJB Monte-Carlo estimate and
/// compares them with the tabulated constants.
std::vector<ReferenceCheck> verify_references(const VerifyOptions& options = {});

struct GradCheckOptions {
  std::string problem = "allen-cahn";
  ArchSpec arch = MultiscaleSpec{2, {2, 3, 4, 5}};
  std::size_t batch = 4;
  std::size_t time_steps = 3;
  double h = 1e-6;
};

/// Max relative deviation between the backward() gradient of the unrolled
/// loss and central differences, with theta = init_params(arch, seed) and
/// paths drawn from `seed`.
double rollout_grad_check(const GradCheckOptions& options, std::uint64_t seed);

}  // namespace deep2bsde

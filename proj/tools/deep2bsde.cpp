// deep2bsde command line: solve, verify-refs, grad-check.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/harness.hpp"
#include "deep2bsde/problems.hpp"
#include "deep2bsde/sde_path.hpp"

using namespace deep2bsde;

namespace {

struct SolveArgs {
  std::string config_path;
  std::optional<std::string> problem;
  std::optional<std::size_t> dim;
  std::optional<std::string> arch;
  std::optional<std::string> scales;
  std::optional<std::size_t> channels;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> batch;
  std::optional<std::string> optimizer;
  std::optional<std::string> schedule;
  std::optional<std::size_t> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> eval_every;
  std::optional<std::size_t> checkpoint_every;
  std::optional<std::size_t> time_steps;
  std::optional<double> reference;
  std::optional<std::size_t> reference_samples;
  bool bias_correction = false;
  std::string dump_paths;
  bool quiet = false;
};

std::array<std::size_t, 4> parse_scales(const std::string& text) {
  std::array<std::size_t, 4> out{};
  std::stringstream in(text);
  std::string item;
  std::size_t k = 0;
  while (std::getline(in, item, ',')) {
    if (k == 4) throw ConfigError("--scales takes exactly four widths");
    try {
      out[k++] = std::stoul(item);
    } catch (const std::exception&) {
      throw ConfigError("bad width '" + item + "' in --scales");
    }
  }
  if (k != 4) throw ConfigError("--scales takes exactly four widths");
  return out;
}

RunConfig build_config(const SolveArgs& a) {
  RunConfig c;
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) throw ConfigError("cannot open config " + a.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + a.config_path + " is not valid JSON: " + e.what());
    }
    c = run_config_from_json(j);
  }
  if (a.problem) c.problem = *a.problem;
  if (a.dim) c.dim = *a.dim;
  if (a.arch) {
    if (*a.arch == "multiscale" && !std::holds_alternative<MultiscaleSpec>(c.arch)) {
      c.arch = MultiscaleSpec{c.dim, {20, 30, 40, 50}};
    } else if (*a.arch == "cnn" && !std::holds_alternative<CnnSpec>(c.arch)) {
      c.arch = CnnSpec{c.dim};
    } else if (*a.arch != "multiscale" && *a.arch != "cnn") {
      throw ConfigError("unknown architecture '" + *a.arch + "' (expected multiscale or cnn)");
    }
  }
  if (a.scales) {
    auto* s = std::get_if<MultiscaleSpec>(&c.arch);
    if (!s) throw ConfigError("--scales applies to the multiscale architecture only");
    s->scales = parse_scales(*a.scales);
  }
  if (a.channels) {
    auto* s = std::get_if<CnnSpec>(&c.arch);
    if (!s) throw ConfigError("--channels applies to the cnn architecture only");
    s->channels = *a.channels;
  }
  if (a.steps) c.train.steps = *a.steps;
  if (a.batch) c.train.batch = *a.batch;
  if (a.optimizer) c.train.optimizer = parse_optimizer(*a.optimizer);
  if (a.schedule) c.schedule = *a.schedule;
  if (a.runs) c.train.runs = *a.runs;
  if (a.seed) c.seed = *a.seed;
  if (a.out) c.out = *a.out;
  if (a.eval_every) c.train.eval_every = *a.eval_every;
  if (a.checkpoint_every) c.checkpoint_every = *a.checkpoint_every;
  if (a.time_steps) c.train.time_steps = *a.time_steps;
  if (a.reference) c.reference = *a.reference;
  if (a.reference_samples) c.reference_samples = *a.reference_samples;
  if (a.bias_correction) c.train.adam.bias_correction = true;
  return resolve(c);
}

int run_solve(const SolveArgs& args) {
  const RunConfig config = build_config(args);
  if (!args.dump_paths.empty()) {
    const ProblemSpec problem = resolve_problem(config);
    const TimeGrid grid = uniform_grid(problem.horizon, problem.steps);
    const PathBatch paths =
        simulate(problem, grid, sample_brownian(step_seed(config.seed, 0), config.train.batch, grid, problem.dim));
    std::ofstream out(args.dump_paths);
    if (!out) throw Error("cannot write " + args.dump_paths);
    write_paths_csv(paths, out);
    std::cout << "wrote " << paths.batch() << " paths to " << args.dump_paths << '\n';
    return 0;
  }
  Logger log;
  if (!args.quiet) log = [](const std::string& line) { std::cerr << line << '\n'; };
  const ResultBundle bundle = run_experiment(config, log);
  std::ifstream table(config.out / "table.md");
  std::cout << table.rdbuf();
  if (!bundle.failures.empty()) {
    std::cout << bundle.failures.size() << " of " << config.train.runs << " runs diverged\n";
    return 3;
  }
  return 0;
}

int run_verify(const VerifyOptions& options) {
  bool ok = true;
  for (const ReferenceCheck& c : verify_references(options)) {
    char line[256];
    if (c.computed) {
      std::snprintf(line, sizeof line, "%-18s expected %-10.10g computed %-12.6f tol %-10.3g %s  (%s)", c.name.c_str(),
                    c.expected, *c.computed, c.tolerance.value_or(0.0), c.pass ? "PASS" : "FAIL", c.note.c_str());
    } else {
      std::snprintf(line, sizeof line, "%-18s expected %-10.10g %s", c.name.c_str(), c.expected, c.note.c_str());
    }
    std::cout << line << '\n';
    ok = ok && c.pass;
  }
  return ok ? 0 : 1;
}

struct GradArgs {
  std::string arch = "multiscale";
  std::string problem = "allen-cahn";
  std::optional<std::size_t> dim;
  std::size_t channels = 2;
  std::size_t seeds = 20;
  std::uint64_t seed = 1;
  std::size_t batch = 4;
  std::size_t time_steps = 3;
  double tolerance = 1e-5;
};

int run_grad_check(const GradArgs& a) {
  GradCheckOptions o;
  o.problem = a.problem;
  o.batch = a.batch;
  o.time_steps = a.time_steps;
  double worst = 0.0;
  for (std::size_t k = 0; k < a.seeds; ++k) {
    const std::uint64_t seed = a.seed + k;
    if (a.arch == "cnn") {
      o.arch = CnnSpec{a.dim.value_or(4), a.channels};
    } else if (a.arch == "multiscale") {
      o.arch = MultiscaleSpec{a.dim.value_or(2), {2, 3, 4, 5}};
    } else {
      throw ConfigError("unknown architecture '" + a.arch + "'");
    }
    const double err = rollout_grad_check(o, seed);
    worst = std::max(worst, err);
    std::printf("seed %llu  max relative error %.3e\n", static_cast<unsigned long long>(seed), err);
  }
  std::printf("worst %.3e  tolerance %.1e  %s\n", worst, a.tolerance, worst <= a.tolerance ? "PASS" : "FAIL");
  return worst <= a.tolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep2bsde: train, check references, check gradients"};
  app.require_subcommand(1);

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "train the solver and write a result bundle");
  s->add_option("--config", solve.config_path, "JSON run config; flags override its values");
  s->add_option("--problem", solve.problem, "allen-cahn, bsb or hjb");
  s->add_option("--dim", solve.dim, "spatial dimension d");
  s->add_option("--arch", solve.arch, "multiscale or cnn");
  s->add_option("--scales", solve.scales, "four multiscale widths, e.g. 20,30,40,50");
  s->add_option("--channels", solve.channels, "CNN channel count");
  s->add_option("--steps", solve.steps, "training steps M");
  s->add_option("--batch", solve.batch, "batch size J");
  s->add_option("--optimizer", solve.optimizer, "sgd or adam");
  s->add_option("--schedule", solve.schedule, "preset or inline learning-rate schedule");
  s->add_option("--runs", solve.runs, "independent runs");
  s->add_option("--seed", solve.seed, "seed of run 0; run r uses seed + r");
  s->add_option("--out", solve.out, "output directory");
  s->add_option("--eval-every", solve.eval_every, "metrics cadence in steps");
  s->add_option("--checkpoint-every", solve.checkpoint_every, "aggregate table cadence in steps");
  s->add_option("--time-steps", solve.time_steps, "time steps N (default: problem value)");
  s->add_option("--reference", solve.reference, "reference value for the relative error");
  s->add_option("--reference-samples", solve.reference_samples, "Monte-Carlo samples for an HJB reference");
  s->add_flag("--bias-correction", solve.bias_correction, "enable Adam bias correction");
  s->add_option("--dump-paths", solve.dump_paths, "write the step-0 path batch of run 0 as CSV and exit");
  s->add_flag("--quiet", solve.quiet, "no progress output");

  VerifyOptions verify;
  bool skip_mc = false;
  auto* v = app.add_subcommand("verify-refs", "recompute reference values");
  v->add_option("--samples", verify.mc_samples, "Monte-Carlo samples for HJB d=100");
  v->add_option("--seed", verify.mc_seed, "Monte-Carlo seed");
  v->add_flag("--skip-monte-carlo", skip_mc, "closed-form checks only");

  GradArgs grad;
  auto* g = app.add_subcommand("grad-check", "compare backward() with central differences on small rollouts");
  g->add_option("--arch", grad.arch, "multiscale or cnn");
  g->add_option("--problem", grad.problem, "allen-cahn, bsb or hjb");
  g->add_option("--dim", grad.dim, "dimension (default 2, or 4 for cnn)");
  g->add_option("--channels", grad.channels, "CNN channels");
  g->add_option("--seeds", grad.seeds, "number of seeds");
  g->add_option("--seed", grad.seed, "first seed");
  g->add_option("--batch", grad.batch, "batch size J");
  g->add_option("--time-steps", grad.time_steps, "time steps N");
  g->add_option("--tolerance", grad.tolerance, "pass threshold");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s) return run_solve(solve);
    if (*v) {
      verify.include_monte_carlo = !skip_mc;
      return run_verify(verify);
    }
    if (*g) return run_grad_check(grad);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

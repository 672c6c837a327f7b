#include "deep2bsde/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/kernels.hpp"
#include "deep2bsde/ops.hpp"
#include "deep2bsde/problems.hpp"
#include "deep2bsde/rng.hpp"

namespace deep2bsde {

namespace {

using nlohmann::json;

/// Shortest round-trip decimal form.
std::string number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("number formatting failed");
  return std::string(buf, end);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

/// Sorted pairwise sum, independent of the input order.
double ordered_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return kernels::pairwise_sum(values);
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(const std::vector<double>& values) {
  const auto n = static_cast<double>(values.size());
  Moments m;
  m.mean = ordered_sum(values) / n;
  if (values.size() > 1) {
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - m.mean) * (values[i] - m.mean);
    m.sd = std::sqrt(ordered_sum(sq) / (n - 1.0));
  }
  return m;
}

}  // namespace

json to_json(const RunConfig& c) {
  json arch = to_json(c.arch);
  arch.erase("dim");
  return json{{"problem", c.problem},
              {"dim", c.dim},
              {"problem_overrides", c.problem_overrides},
              {"arch", arch},
              {"train",
               {{"batch", c.train.batch},
                {"steps", c.train.steps},
                {"optimizer", optimizer_name(c.train.optimizer)},
                {"adam",
                 {{"beta1", c.train.adam.beta1},
                  {"beta2", c.train.adam.beta2},
                  {"eps", c.train.adam.eps},
                  {"bias_correction", c.train.adam.bias_correction}}},
                {"eval_every", c.train.eval_every},
                {"runs", c.train.runs},
                {"time_steps", c.train.time_steps}}},
              {"schedule", c.schedule},
              {"seed", c.seed},
              {"checkpoint_every", c.checkpoint_every},
              {"reference", c.reference ? json(*c.reference) : json(nullptr)},
              {"reference_samples", c.reference_samples},
              {"reference_seed", c.reference_seed},
              {"out", c.out.string()}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    reject_unknown(j,
                   {"problem", "dim", "problem_overrides", "arch", "train", "schedule", "seed", "checkpoint_every",
                    "reference", "reference_samples", "reference_seed", "out"},
                   "run config");
    read(j, "problem", c.problem);
    read(j, "dim", c.dim);
    if (j.contains("problem_overrides")) c.problem_overrides = j.at("problem_overrides");
    if (j.contains("arch")) {
      json arch = j.at("arch");
      reject_unknown(arch, {"kind", "dim", "scales", "channels", "relu_after_last_conv_a", "relu_after_last_conv_g"},
                     "arch");
      arch["dim"] = c.dim;
      c.arch = arch_from_json(arch);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown(t, {"batch", "steps", "optimizer", "adam", "eval_every", "runs", "time_steps"}, "train");
      read(t, "batch", c.train.batch);
      read(t, "steps", c.train.steps);
      if (t.contains("optimizer")) c.train.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
      if (t.contains("adam")) {
        const json& a = t.at("adam");
        reject_unknown(a, {"beta1", "beta2", "eps", "bias_correction"}, "train.adam");
        read(a, "beta1", c.train.adam.beta1);
        read(a, "beta2", c.train.adam.beta2);
        read(a, "eps", c.train.adam.eps);
        read(a, "bias_correction", c.train.adam.bias_correction);
      }
      read(t, "eval_every", c.train.eval_every);
      read(t, "runs", c.train.runs);
      read(t, "time_steps", c.train.time_steps);
    }
    read(j, "schedule", c.schedule);
    read(j, "seed", c.seed);
    read(j, "checkpoint_every", c.checkpoint_every);
    if (j.contains("reference") && !j.at("reference").is_null()) c.reference = j.at("reference").get<double>();
    read(j, "reference_samples", c.reference_samples);
    read(j, "reference_seed", c.reference_seed);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
  return c;
}

std::string default_schedule_name(const std::string& problem, const ArchSpec& arch) {
  const bool cnn = std::holds_alternative<CnnSpec>(arch);
  if (problem == "allen-cahn") return "allen-cahn";
  if (problem == "hjb") return cnn ? "hjb-cnn" : "hjb";
  if (problem == "bsb") return cnn ? "bsb-cnn" : "bsb";
  throw ConfigError("unknown problem '" + problem + "'");
}

RunConfig resolve(RunConfig c) {
  std::visit([&](auto& s) { s.dim = c.dim; }, c.arch);
  validate(c.arch);
  c.train.validate();
  if (c.checkpoint_every == 0) throw ConfigError("checkpoint_every must be at least 1");
  if (c.checkpoint_every % c.train.eval_every != 0) {
    throw ConfigError("checkpoint_every must be a multiple of eval_every");
  }
  if (c.schedule.empty()) c.schedule = default_schedule_name(c.problem, c.arch);
  LrSchedule::parse(c.schedule);
  return c;
}

ProblemSpec resolve_problem(const RunConfig& c) {
  ProblemSpec p;
  const json& o = c.problem_overrides;
  if (!o.is_object()) throw ConfigError("problem_overrides must be a JSON object");
  try {
    if (c.problem == "bsb") {
      reject_unknown(o, {"horizon", "rate", "sigma_max", "sigma_min", "sigma_c"}, "problem_overrides");
      BsbParams params;
      read(o, "horizon", params.horizon);
      read(o, "rate", params.rate);
      read(o, "sigma_max", params.sigma_max);
      read(o, "sigma_min", params.sigma_min);
      read(o, "sigma_c", params.sigma_c);
      p = bsb(c.dim, params);
    } else {
      reject_unknown(o, {"horizon"}, "problem_overrides");
      p = make_problem(c.problem, c.dim);
      if (o.contains("horizon")) {
        p.horizon = o.at("horizon").get<double>();
        p.reference.reset();
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad problem override: ") + e.what());
  }
  if (c.train.time_steps) p.steps = c.train.time_steps;
  if (c.reference) {
    p.reference = Reference{*c.reference, "config"};
  } else if (!p.reference && p.name == "hjb" && c.reference_samples > 0) {
    const MonteCarloEstimate mc = hjb_mc_reference(p.g, p.xi, p.horizon, c.reference_samples, c.reference_seed);
    p.reference = Reference{mc.estimate, "monte-carlo"};
  }
  return p;
}

std::vector<std::size_t> checkpoint_steps(std::size_t last, std::size_t every) {
  if (every == 0) throw ConfigError("checkpoint spacing must be positive");
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < last; s += every) out.push_back(s);
  out.push_back(last);
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricsRow>>& rows,
                                    const std::vector<std::size_t>& steps) {
  std::vector<AggregateRow> out;
  for (std::size_t step : steps) {
    std::vector<double> u, err, loss, secs;
    bool all_have_error = true;
    for (const auto& run : rows) {
      auto it = std::lower_bound(run.begin(), run.end(), step,
                                 [](const MetricsRow& r, std::size_t s) { return r.step < s; });
      if (it == run.end() || it->step != step) continue;
      u.push_back(it->u_estimate);
      loss.push_back(it->loss);
      secs.push_back(it->seconds);
      if (it->rel_l1_error) {
        err.push_back(*it->rel_l1_error);
      } else {
        all_have_error = false;
      }
    }
    AggregateRow a;
    a.step = step;
    a.runs = u.size();
    a.missing = rows.size() - u.size();
    if (!u.empty()) {
      const Moments mu = moments(u);
      a.mean_u = mu.mean;
      a.std_u = mu.sd;
      a.mean_loss = moments(loss).mean;
      a.mean_seconds = moments(secs).mean;
      if (all_have_error) {
        const Moments me = moments(err);
        a.mean_error = me.mean;
        a.std_error = me.sd;
      }
    }
    out.push_back(a);
  }
  return out;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, std::ostream& out) {
  out << "step,runs,missing,mean_u,std_u,mean_rel_l1_error,std_rel_l1_error,mean_loss\n";
  for (const AggregateRow& a : rows) {
    out << a.step << ',' << a.runs << ',' << a.missing;
    if (a.runs == 0) {
      out << ",,,,,\n";
      continue;
    }
    out << ',' << number(a.mean_u) << ',' << number(a.std_u) << ','
        << (a.mean_error ? number(*a.mean_error) : "") << ',' << (a.std_error ? number(*a.std_error) : "") << ','
        << number(a.mean_loss) << '\n';
  }
}

void write_timing_csv(const std::vector<AggregateRow>& rows, std::ostream& out) {
  out << "step,runs,mean_seconds\n";
  for (const AggregateRow& a : rows) {
    out << a.step << ',' << a.runs << ',' << (a.runs ? number(a.mean_seconds) : "") << '\n';
  }
}

void write_table_markdown(const std::vector<AggregateRow>& rows, const std::string& title, std::ostream& out) {
  out << "### " << title << "\n\n";
  out << "| Training steps | Mean of u | Std of u | Mean of rel. L1 error | Std of rel. L1 error "
         "| Mean of the loss function | Runtime in sec. |\n";
  out << "|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const AggregateRow& a : rows) {
    if (a.runs == 0) {
      out << "| " << a.step << " | - | - | - | - | - | - |\n";
      continue;
    }
    out << "| " << a.step << " | " << fixed(a.mean_u, 5) << " | " << fixed(a.std_u, 5) << " | "
        << (a.mean_error ? fixed(*a.mean_error, 5) : "-") << " | " << (a.std_error ? fixed(*a.std_error, 5) : "-")
        << " | " << fixed(a.mean_loss, 5) << " | " << fixed(a.mean_seconds, 1) << " |\n";
  }
  std::size_t missing = 0;
  for (const AggregateRow& a : rows) missing = std::max(missing, a.missing);
  if (missing) out << "\n" << missing << " run(s) did not reach every checkpoint; see manifest.json.\n";
}

json to_json(const MetricsRow& row) {
  return json{{"run", row.run},
              {"step", row.step},
              {"u_estimate", row.u_estimate},
              {"loss", row.loss},
              {"rel_l1_error", row.rel_l1_error ? json(*row.rel_l1_error) : json(nullptr)},
              {"seconds", row.seconds}};
}

ResultBundle run_experiment(const RunConfig& config, const Logger& log) {
  ResultBundle bundle;
  bundle.config = resolve(config);
  const RunConfig& c = bundle.config;
  const ProblemSpec problem = resolve_problem(c);
  bundle.reference = problem.reference;
  TrainConfig train_config = c.train;
  train_config.schedule = LrSchedule::parse(c.schedule);

  std::filesystem::create_directories(c.out);
  json runs = json::array();
  for (std::size_t r = 0; r < c.train.runs; ++r) {
    const std::uint64_t seed = c.seed + r;
    const std::string stem = "run_" + std::to_string(r);
    std::ofstream jsonl = open_out(c.out / (stem + ".jsonl"));
    std::vector<MetricsRow> rows;
    json status{{"run", r}, {"seed", seed}};
    try {
      TrainState state = train(
          problem, c.arch, train_config, seed,
          [&](const MetricsRow& row) {
            rows.push_back(row);
            jsonl << to_json(row).dump() << '\n';
            if (log && row.step % c.checkpoint_every == 0) {
              log(stem + " step " + std::to_string(row.step) + " u=" + fixed(row.u_estimate, 6) +
                  " loss=" + fixed(row.loss, 6) + " t=" + fixed(row.seconds, 1) + "s");
            }
          },
          r);
      save_checkpoint(c.out / (stem + ".ckpt"), Checkpoint{c.arch, state.theta, seed, state.step});
      status["status"] = "ok";
    } catch (const DivergenceError& e) {
      bundle.failures.push_back({r, seed, e.what()});
      status["status"] = "diverged";
      status["error"] = e.what();
      if (log) log(stem + " diverged: " + e.what());
    }
    status["steps_completed"] = rows.empty() ? json(nullptr) : json(rows.back().step);
    status["final_u"] = rows.empty() ? json(nullptr) : json(rows.back().u_estimate);
    status["seconds"] = rows.empty() ? json(nullptr) : json(rows.back().seconds);
    runs.push_back(status);
    bundle.rows.push_back(std::move(rows));
  }

  const auto agg = aggregate(bundle.rows, checkpoint_steps(c.train.steps, c.checkpoint_every));
  {
    auto out = open_out(c.out / "aggregate.csv");
    write_aggregate_csv(agg, out);
  }
  {
    auto out = open_out(c.out / "timing.csv");
    write_timing_csv(agg, out);
  }
  {
    auto out = open_out(c.out / "table.md");
    write_table_markdown(agg, problem.name + ", d = " + std::to_string(c.dim) + ", " + arch_name(c.arch), out);
  }
  const std::vector<std::string> warnings = emit_curves(bundle, c.out);
  for (const auto& w : warnings) {
    if (log) log("warning: " + w);
  }

  json manifest{{"config", to_json(c)},
                {"problem", problem.name},
                {"time_steps", problem.steps},
                {"horizon", problem.horizon},
                {"param_count", param_count(c.arch)},
                {"theta_size", make_layout(c.arch).size()},
                {"runs", runs},
                {"warnings", warnings},
                {"files", {"aggregate.csv", "timing.csv", "table.md", "error_curve.csv", "loss_curve.csv"}}};
  manifest["reference"] = problem.reference
                              ? json{{"value", problem.reference->value}, {"provenance", problem.reference->provenance}}
                              : json(nullptr);
  // HJB reports carry the in-house estimate next to whatever reference is in use.
  if (problem.name == "hjb" && c.reference_samples > 0) {
    const MonteCarloEstimate mc =
        hjb_mc_reference(problem.g, problem.xi, problem.horizon, c.reference_samples, c.reference_seed);
    manifest["monte_carlo_estimate"] = json{
        {"value", mc.estimate}, {"std_error", mc.std_error}, {"samples", mc.samples}, {"seed", c.reference_seed}};
  }
  auto out = open_out(c.out / "manifest.json");
  out << manifest.dump(2) << '\n';
  return bundle;
}

std::vector<std::string> emit_curves(const ResultBundle& bundle, const std::filesystem::path& dir) {
  std::set<std::size_t> steps;
  for (const auto& run : bundle.rows)
    for (const auto& row : run) steps.insert(row.step);
  if (steps.empty()) throw UsageError("cannot emit curves from an empty result bundle");
  const auto agg = aggregate(bundle.rows, std::vector<std::size_t>(steps.begin(), steps.end()));

  std::filesystem::create_directories(dir);
  auto err = open_out(dir / "error_curve.csv");
  auto loss = open_out(dir / "loss_curve.csv");
  err << "step,mean_rel_l1_error\n";
  loss << "step,mean_loss\n";
  for (const AggregateRow& a : agg) {
    err << a.step << ',' << (a.mean_error ? number(*a.mean_error) : "") << '\n';
    loss << a.step << ',' << number(a.mean_loss) << '\n';
  }

  // Soft check: least-squares slope of the mean error over the last 10% of steps.
  std::vector<std::string> warnings;
  const std::size_t last = *steps.rbegin();
  std::vector<double> xs, ys;
  for (const AggregateRow& a : agg) {
    if (a.mean_error && 10 * a.step >= 9 * last) {
      xs.push_back(static_cast<double>(a.step));
      ys.push_back(*a.mean_error);
    }
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx > 0 && sxy / sxx > 0) {
      warnings.push_back("mean relative error increases over the last 10% of steps (slope " + number(sxy / sxx) +
                         " per step)");
    }
  }
  return warnings;
}

std::vector<ReferenceCheck> verify_references(const VerifyOptions& options) {
  std::vector<ReferenceCheck> out;
  for (auto [d, expected] : {std::pair<std::size_t, double>{100, 77.1049}, {256, 197.3885}, {400, 308.4195}}) {
    const ProblemSpec p = bsb(d);
    ReferenceCheck c;
    c.name = "bsb d=" + std::to_string(d);
    c.expected = expected;
    c.computed = bsb_exact(0.0, p.xi);
    c.tolerance = 5e-5;
    c.pass = std::abs(*c.computed - expected) <= *c.tolerance;
    c.note = "closed form, 4 decimal places";
    out.push_back(c);
  }
  if (options.include_monte_carlo) {
    const MonteCarloEstimate mc = hjb_mc_reference(100, options.mc_samples, options.mc_seed);
    ReferenceCheck c;
    c.name = "hjb d=100";
    c.expected = 4.5901;
    c.computed = mc.estimate;
    c.tolerance = 3.0 * mc.std_error;
    c.pass = std::abs(mc.estimate - c.expected) <= *c.tolerance;
    c.note = "Monte-Carlo, " + std::to_string(options.mc_samples) + " samples, 3 standard errors";
    out.push_back(c);
  }
  for (auto [d, expected] : {std::pair<std::size_t, double>{20, 0.30879}, {256, 0.041531}, {400, 0.027106}}) {
    ReferenceCheck c;
    c.name = "allen-cahn d=" + std::to_string(d);
    c.expected = expected;
    c.pass = true;
    c.note = "external, not recomputed";
    out.push_back(c);
  }
  return out;
}

double rollout_grad_check(const GradCheckOptions& options, std::uint64_t seed) {
  const ProblemSpec problem = make_problem(options.problem, arch_dim(options.arch));
  const TimeGrid grid = uniform_grid(problem.horizon, options.time_steps);
  const PathBatch paths = simulate(problem, grid, sample_brownian(step_seed(seed, 0), options.batch, grid, problem.dim));
  const Network net(options.arch);
  ParamVector theta = init_params(options.arch, seed);
  // Nonzero biases and initial-block entries so every coordinate is exercised.
  auto gen = make_stream(seed, {stream_tag::init, 1});
  std::normal_distribution<double> normal(0.0, 0.1);
  for (double& v : theta.values()) v += normal(gen);
  return ad::grad_check(
      [&](Tape& tape, Var th) {
        NetworkModel model(net, th);
        return rollout(tape, model, problem, grid, paths).loss;
      },
      theta.values(), options.h);
}

}  // namespace deep2bsde

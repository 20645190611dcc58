#include "cli_commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <map>
#include <sstream>

namespace vslam::cli {

namespace {

const std::vector<std::size_t> kDefaultBenchCounts = {10, 25, 50, 100, 200, 400};

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

bool is_fig2(const RunConfig& c) { return c.command == "fig2" || (c.command == "sim" && c.preset == "fig2"); }

void prepare_out(const RunConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) throw IoError("cannot create output directory " + config.out.string() + ": " + ec.message());
  write_text(config.out / "config.ini", effective_config(config));
}

const char* estimator_name(EstimatorSelection e) {
  switch (e) {
    case EstimatorSelection::observer: return "observer";
    case EstimatorSelection::ekf: return "ekf";
    case EstimatorSelection::both: return "both";
  }
  return "observer";
}

std::vector<double> as_doubles(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

std::vector<double> fitted(const PolyFit& fit, const std::vector<double>& x) {
  std::vector<double> y;
  for (double n : x) {
    double v = 0.0, p = 1.0;
    for (double c : fit.coefficients) {
      v += c * p;
      p *= n;
    }
    y.push_back(v);
  }
  return y;
}

}  // namespace

void configure_app(CLI::App& app, RunConfig& c) {
  app.set_config("--config", "", "Read key=value settings; command-line flags win");
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_option("--seed", c.seed, "Base random seed");
  app.add_option("--trials", c.trials, "Trials per configuration")->check(CLI::PositiveNumber);
  app.add_option("--landmarks", c.landmarks, "Landmark count, or a comma list for bench")->delimiter(',');
  app.add_option("--duration", c.duration, "Simulated time in seconds");
  app.add_option("--dt", c.dt, "Time step in seconds");
  app.add_option("--estimator", c.estimator, "observer, ekf or both")
      ->check(CLI::IsMember({"observer", "ekf", "both"}));
  app.add_option("--integrator", c.integrator, "Observer integrator")
      ->check(CLI::IsMember({"geometric", "additive"}))
      ->capture_default_str();
  app.add_option("--flow", c.flow, "Optical flow source")
      ->check(CLI::IsMember({"analytic", "finite-difference"}))
      ->capture_default_str();
  app.add_option("--jobs", c.jobs, "Worker threads for trials (0: all)")->check(CLI::NonNegativeNumber);
  app.add_flag("--sequential", c.sequential, "Run trials one at a time");
  app.add_option("--samples", c.samples, "Samples per property check (verify)")->check(CLI::PositiveNumber);
  app.add_flag("--full", c.full, "Use the full 500-trial count");
  app.add_option("--preset", c.preset, "Scenario for sim")->check(CLI::IsMember({"fig2", "compare"}));
  app.add_flag("--noise-free", c.noise_free, "Zero every noise variance");
  app.add_option("--range", c.range, "Sensor range in metres");
  app.add_option("--var-linear", c.var_linear, "Linear velocity noise variance");
  app.add_option("--var-angular", c.var_angular, "Angular velocity noise variance");
  app.add_option("--var-flow", c.var_flow, "Optical flow noise variance");
  app.add_option("--var-bearing", c.var_bearing, "Bearing noise variance");
  app.add_option("--var-inv-depth", c.var_inv_depth, "Inverse depth noise variance");
  app.add_option("--gain-bearing", c.gain_bearing, "Observer gain k_Q");
  app.add_option("--gain-scale", c.gain_scale, "Observer gain k_a");
  app.add_option("--gain-pose", c.gain_pose, "Observer gain k_A");
  app.add_option("--band-inner", c.band_inner, "Landmark band inner offset from the path");
  app.add_option("--band-outer", c.band_outer, "Landmark band outer offset from the path");
  app.add_option("--inject-fault", c.inject_fault)->group("")->check(CLI::IsMember({"none", "rho-sign"}));

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"verify", "Randomized algebraic property checks"},
      {"fig2", "Noise-free Lyapunov convergence run"},
      {"compare", "Observer and EKF RMSE over seeded noisy trials"},
      {"bench", "Per-step timing sweep over landmark counts"},
      {"sim", "Single seeded trial with full time series"}};
  for (const auto& [name, help] : commands) {
    app.add_subcommand(name, help)->fallthrough()->callback([&c, name = name] { c.command = name; });
  }
  app.require_subcommand(1);
}

Scenario scenario_for(const RunConfig& c) {
  Scenario sc = is_fig2(c) ? Scenario::lyapunov_preset() : Scenario::comparison_preset();
  if (c.command == "sim") sc.estimators = EstimatorSelection::observer;
  if (c.estimator) {
    sc.estimators = *c.estimator == "ekf"    ? EstimatorSelection::ekf
                    : *c.estimator == "both" ? EstimatorSelection::both
                                             : EstimatorSelection::observer;
  }
  if (c.command == "fig2" && sc.estimators != EstimatorSelection::observer) {
    throw PreconditionError("fig2 records observer Lyapunov storage; --estimator must be observer");
  }
  if (c.seed) sc.system.seed = *c.seed;
  if (c.command != "bench" && c.landmarks.size() > 1) {
    throw PreconditionError("--landmarks takes a list only for bench");
  }
  if (c.landmarks.size() == 1) sc.system.landmark_count = c.landmarks.front();
  if (c.duration) sc.duration = *c.duration;
  if (c.dt) sc.dt = *c.dt;
  if (c.range) sc.system.sensor_range = *c.range;
  if (c.var_linear) sc.system.var_linear = *c.var_linear;
  if (c.var_angular) sc.system.var_angular = *c.var_angular;
  if (c.var_flow) sc.system.var_flow = *c.var_flow;
  if (c.var_bearing) sc.system.var_bearing = *c.var_bearing;
  if (c.var_inv_depth) sc.system.var_inv_depth = *c.var_inv_depth;
  if (c.noise_free) {
    sc.system.var_linear = sc.system.var_angular = sc.system.var_flow = 0.0;
    sc.system.var_bearing = sc.system.var_inv_depth = 0.0;
  }
  if (c.gain_bearing) sc.gains.bearing = *c.gain_bearing;
  if (c.gain_scale) sc.gains.scale = *c.gain_scale;
  if (c.gain_pose) sc.gains.pose = *c.gain_pose;
  if (c.band_inner) sc.band_inner = *c.band_inner;
  if (c.band_outer) sc.band_outer = *c.band_outer;
  sc.observer_options.integrator = c.integrator == "additive" ? Integrator::additive : Integrator::geometric;
  sc.system.flow_mode = c.flow == "finite-difference" ? FlowMode::finite_difference : FlowMode::analytic;
  sc.validate();
  return sc;
}

std::vector<std::size_t> bench_counts(const RunConfig& c) {
  std::vector<std::size_t> counts = c.landmarks.empty() ? kDefaultBenchCounts : c.landmarks;
  if (counts.size() < 2) throw PreconditionError("bench needs at least two landmark counts");
  return counts;
}

std::size_t trial_count(const RunConfig& c) {
  if (c.trials) return *c.trials;
  if (c.full) return 500;
  return c.command == "bench" ? 3 : 20;
}

std::string effective_config(const RunConfig& c) {
  const Scenario sc = scenario_for(c);
  std::ostringstream os;
  os << "# " << c.command << "\n";
  const auto kv = [&](const std::string& k, const std::string& v) { os << k << "=" << v << "\n"; };
  kv("out", "\"" + c.out.generic_string() + "\"");
  kv("seed", std::to_string(sc.system.seed));
  kv("trials", std::to_string(trial_count(c)));
  kv("landmarks", c.command == "bench" ? join(bench_counts(c)) : std::to_string(sc.system.landmark_count));
  kv("duration", format_number(sc.duration));
  kv("dt", format_number(sc.dt));
  kv("estimator", estimator_name(sc.estimators));
  kv("integrator", c.integrator);
  kv("flow", c.flow);
  kv("jobs", std::to_string(c.jobs));
  kv("sequential", c.sequential ? "true" : "false");
  kv("samples", std::to_string(c.samples));
  kv("full", c.full ? "true" : "false");
  kv("preset", c.preset);
  kv("noise-free", c.noise_free ? "true" : "false");
  kv("range", format_number(sc.system.sensor_range));
  kv("var-linear", format_number(sc.system.var_linear));
  kv("var-angular", format_number(sc.system.var_angular));
  kv("var-flow", format_number(sc.system.var_flow));
  kv("var-bearing", format_number(sc.system.var_bearing));
  kv("var-inv-depth", format_number(sc.system.var_inv_depth));
  kv("gain-bearing", format_number(sc.gains.bearing));
  kv("gain-scale", format_number(sc.gains.scale));
  kv("gain-pose", format_number(sc.gains.pose));
  kv("band-inner", format_number(sc.band_inner));
  kv("band-outer", format_number(sc.band_outer));
  return os.str();
}

CsvTable lyapunov_table(const TrialRecord& rec) {
  CsvTable t;
  const std::size_t n = rec.lyapunov_bearing.empty() ? 0 : rec.lyapunov_bearing.front().size();
  t.header.push_back("t");
  for (std::size_t i = 1; i <= n; ++i) t.header.push_back("l_y_" + std::to_string(i));
  for (std::size_t i = 1; i <= n; ++i) t.header.push_back("l_z_" + std::to_string(i));
  for (std::size_t k = 0; k < rec.lyapunov_bearing.size(); ++k) {
    std::vector<std::string> row{format_number(rec.time[k])};
    for (double v : rec.lyapunov_bearing[k]) row.push_back(format_number(v));
    for (double v : rec.lyapunov_depth[k]) row.push_back(format_number(v));
    t.add_row(std::move(row));
  }
  return t;
}

CsvTable compare_table(const SweepResult& sweep) {
  CsvTable t{{"seed", "estimator", "rmse_final", "rmse_mean", "degeneracy_count"}, {}};
  for (const auto& s : sweep.trials) {
    t.add_row({std::to_string(s.seed), s.estimator, format_number(s.rmse_final), format_number(s.rmse_mean),
               std::to_string(s.degeneracy_count)});
  }
  return t;
}

CsvTable bench_table(const SweepResult& sweep) {
  CsvTable t{{"n", "estimator", "median_step_time"}, {}};
  for (const auto& g : sweep.groups) {
    t.add_row({std::to_string(g.landmarks), g.estimator, format_number(g.step_seconds.median)});
  }
  return t;
}

CsvTable sim_table(const TrialRecord& rec) {
  CsvTable t{{"t", "true_x", "true_y", "true_z"}, {}};
  if (rec.observer) {
    for (const char* col : {"observer_x", "observer_y", "observer_z", "observer_rmse", "observer_lyapunov",
                            "observer_pose_innovation", "observer_bearing_innovation", "observer_scale_innovation"}) {
      t.header.emplace_back(col);
    }
  }
  if (rec.ekf) {
    for (const char* col : {"ekf_x", "ekf_y", "ekf_z", "ekf_rmse"}) t.header.emplace_back(col);
  }
  const auto at = [](const std::vector<double>& v, std::size_t k) {
    return k < v.size() ? format_number(v[k]) : std::string();
  };
  for (std::size_t k = 0; k < rec.samples(); ++k) {
    std::vector<std::string> row{format_number(rec.time[k])};
    for (int a = 0; a < 3; ++a) row.push_back(format_number(rec.true_position[k](a)));
    if (rec.observer) {
      const EstimatorTrace& o = *rec.observer;
      for (int a = 0; a < 3; ++a) row.push_back(format_number(o.position[k](a)));
      row.push_back(format_number(o.rmse[k]));
      double l = 0.0;
      if (k < rec.lyapunov_bearing.size()) {
        for (double v : rec.lyapunov_bearing[k]) l += std::isnan(v) ? 0.0 : v;
        for (double v : rec.lyapunov_depth[k]) l += std::isnan(v) ? 0.0 : v;
      }
      row.push_back(format_number(l));
      row.push_back(at(o.pose_innovation, k));
      row.push_back(at(o.bearing_innovation, k));
      row.push_back(at(o.scale_innovation, k));
    }
    if (rec.ekf) {
      const EstimatorTrace& e = *rec.ekf;
      for (int a = 0; a < 3; ++a) row.push_back(format_number(e.position[k](a)));
      row.push_back(format_number(e.rmse[k]));
    }
    t.add_row(std::move(row));
  }
  return t;
}

int cmd_verify(const RunConfig& c, std::ostream& log) {
  if (c.landmarks.size() > 1) throw PreconditionError("verify takes a single --landmarks value");
  CheckOptions opts;
  opts.samples = c.samples;
  opts.landmarks = c.landmarks.empty() ? 10 : c.landmarks.front();
  opts.seed = c.seed.value_or(1);
  const Fault fault = c.inject_fault == "rho-sign" ? Fault::rho_sign : Fault::none;
  prepare_out(c);
  std::ostringstream report;
  bool ok = true;
  for (const CheckResult& r : run_checks(opts, fault)) {
    ok = ok && r.passed();
    report << (r.passed() ? "PASS " : "FAIL ") << r.name << " samples=" << r.samples
           << " max_residual=" << fixed(r.max_residual, 3) << " tolerance=" << fixed(r.tolerance, 3)
           << " seconds=" << fixed(r.seconds, 3) << "\n";
  }
  log << report.str();
  write_text(c.out / "verify.txt", report.str());
  return ok ? kOk : kFailure;
}

int cmd_fig2(const RunConfig& c, std::ostream& log) {
  const Scenario sc = scenario_for(c);
  prepare_out(c);
  const TrialRecord rec = run_trial(sc, {.record_lyapunov = true});
  write_text(c.out / "lyapunov.csv", to_csv(lyapunov_table(rec)));

  const std::size_t n = sc.system.landmark_count;
  for (bool log_y : {false, true}) {
    Panel bearing{"bearing storage l_y", "t [s]", log_y ? "log10 l_y" : "l_y", {}, log_y, {}};
    Panel depth{"inverse depth storage l_z", "t [s]", log_y ? "log10 l_z" : "l_z", {}, log_y, {}};
    for (std::size_t i = 0; i < n; ++i) {
      Series sy{"landmark " + std::to_string(i + 1), rec.time, {}, false};
      Series sz = sy;
      for (std::size_t k = 0; k < rec.samples(); ++k) {
        sy.y.push_back(rec.lyapunov_bearing[k][i]);
        sz.y.push_back(rec.lyapunov_depth[k][i]);
      }
      bearing.series.push_back(std::move(sy));
      depth.series.push_back(std::move(sz));
    }
    write_text(c.out / (log_y ? "lyapunov_log.svg" : "lyapunov.svg"),
               line_chart_svg("Lyapunov components per landmark", {bearing, depth}));
  }
  double l0 = 0.0, l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    l0 += rec.lyapunov_bearing.front()[i] + rec.lyapunov_depth.front()[i];
    l1 += rec.lyapunov_bearing.back()[i] + rec.lyapunov_depth.back()[i];
  }
  log << "fig2: " << rec.samples() << " samples, L(0)=" << fixed(l0) << " L(T)=" << fixed(l1)
      << " final rmse=" << fixed(rec.observer->final_rmse()) << "\n";
  return kOk;
}

int cmd_compare(const RunConfig& c, std::ostream& log) {
  const Scenario sc = scenario_for(c);
  const std::size_t trials = trial_count(c);
  if (trials < 2) throw PreconditionError("compare needs at least two trials");
  prepare_out(c);
  const SweepResult sweep =
      run_sweep(sc, {sc.system.landmark_count}, trials, {.parallel = !c.sequential, .jobs = c.jobs, .trial = {}});
  write_text(c.out / "compare.csv", to_csv(compare_table(sweep)));
  std::vector<Box> boxes;
  for (const auto& g : sweep.groups) {
    boxes.push_back({g.estimator, g.rmse_final});
    log << g.estimator << ": median final rmse " << fixed(g.rmse_final.median) << ", mean "
        << fixed(g.rmse_final.mean) << ", outliers " << g.rmse_final.outliers.size() << "\n";
  }
  write_text(c.out / "compare.svg",
             boxplot_svg("Final RMSE, " + std::to_string(sc.system.landmark_count) + " landmarks, " +
                             std::to_string(trials) + " trials",
                         "log10 RMSE [m]", boxes, true));
  return kOk;
}

int cmd_bench(const RunConfig& c, std::ostream& log) {
  const Scenario sc = scenario_for(c);
  const std::vector<std::size_t> counts = bench_counts(c);
  prepare_out(c);
  const SweepResult sweep = run_sweep(sc, counts, trial_count(c),
                                      {.parallel = !c.sequential, .jobs = c.jobs, .trial = {.record_lyapunov = false}});
  write_text(c.out / "bench.csv", to_csv(bench_table(sweep)));

  std::vector<std::string> notes;
  std::vector<Series> curves;
  std::vector<double> distinct = as_doubles(counts);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::ostringstream summary;
  for (const std::string name : {"observer", "ekf"}) {
    std::vector<double> x, y;
    for (const auto& g : sweep.groups) {
      if (g.estimator != name) continue;
      x.push_back(static_cast<double>(g.landmarks));
      y.push_back(g.step_seconds.median * 1e3);
    }
    if (x.empty()) continue;
    curves.push_back({name + " (ms)", x, y, true});
    if (distinct.size() < 4) {
      summary << name << ": fewer than four distinct counts, no fit\n";
      continue;
    }
    const ComplexityFit fit = complexity_fit(x, y);
    const PolyFit& best = fit.prefers_quadratic ? fit.quadratic : fit.linear;
    curves.push_back({name + " " + fit.preferred() + " fit", distinct, fitted(best, distinct), false});
    summary << name << ": preferred " << fit.preferred() << "; linear R2=" << fixed(fit.linear.r_squared)
            << " AIC=" << fixed(fit.linear.aic) << "; quadratic R2=" << fixed(fit.quadratic.r_squared)
            << " AIC=" << fixed(fit.quadratic.aic) << " c2=" << fixed(fit.quadratic.coefficients[2]) << "\n";
    notes.push_back(name + ": " + fit.preferred() + " (linear R2 " + fixed(fit.linear.r_squared, 3) +
                    ", quadratic R2 " + fixed(fit.quadratic.r_squared, 3) + ")");
  }
  Panel linear{"median step time", "landmarks n", "ms", curves, false, notes};
  Panel logp{"median step time (log scale)", "landmarks n", "log10 ms", curves, true, {}};
  write_text(c.out / "bench.svg", line_chart_svg("Per-step computation time", {linear, logp}));
  write_text(c.out / "bench_fit.txt", summary.str());
  log << to_csv(bench_table(sweep)) << summary.str();
  return kOk;
}

int cmd_sim(const RunConfig& c, std::ostream& log) {
  const Scenario sc = scenario_for(c);
  prepare_out(c);
  const TrialRecord rec = run_trial(sc, {.record_lyapunov = sc.estimators != EstimatorSelection::ekf});
  write_text(c.out / "sim.csv", to_csv(sim_table(rec)));
  log << "sim: seed " << sc.system.seed << ", " << rec.samples() << " samples";
  if (rec.observer) log << ", observer final rmse " << fixed(rec.observer->final_rmse());
  if (rec.ekf) log << ", ekf final rmse " << fixed(rec.ekf->final_rmse());
  log << "\n";
  return kOk;
}

int run_command(const RunConfig& c, std::ostream& log, std::ostream& err) {
  static const std::map<std::string, int (*)(const RunConfig&, std::ostream&)> table = {
      {"verify", cmd_verify}, {"fig2", cmd_fig2}, {"compare", cmd_compare}, {"bench", cmd_bench}, {"sim", cmd_sim}};
  const auto it = table.find(c.command);
  if (it == table.end()) {
    err << "unknown command '" << c.command << "'\n";
    return kConfigError;
  }
  try {
    return it->second(c, log);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

int cli_main(int argc, const char* const* argv, std::ostream& log, std::ostream& err) {
  CLI::App app{"Equivariant visual SLAM observer and EKF baseline"};
  app.name("vslam_cli");
  RunConfig config;
  configure_app(app, config);
  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& e) {
    err << e.what() << "\n";
    return kIoError;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kOk : kConfigError;
  }
  return run_command(config, log, err);
}

}  // namespace vslam::cli

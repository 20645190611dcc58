#pragma once

// Scenario construction, trial execution, metrics and Monte-Carlo sweeps.

#include "vslam/ekf.hpp"
#include "vslam/observer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vslam {

enum class EstimatorSelection { observer, ekf, both };

struct Scenario {
  /// Constant body velocity of the robot (the default drives a 100 s circle).
  Twist velocity{Vec3(0.0, 0.0, 0.02 * 3.141592653589793), Vec3(0.1, 0.0, 0.0)};
  double band_inner = 0.5;  // m, landmark distance from the path
  double band_outer = 1.0;
  double duration = 100.0;  // s
  double dt = 0.5;          // s
  SystemParams system;
  ObserverGains gains;
  ObserverOptions observer_options;
  Execution ekf_execution = Execution::serial;
  EstimatorSelection estimators = EstimatorSelection::observer;
  /// Start the observer with every landmark in a random reference
  /// configuration instead of initializing landmarks on first sight.
  bool random_reference = false;

  void validate() const;
  std::size_t step_count() const;

  /// Noise-free convergence run: 10 landmarks always in view, random reference.
  static Scenario lyapunov_preset();
  /// Noisy comparison run: 50 landmarks, 1 m sensor range, both estimators.
  static Scenario comparison_preset();
};

struct ScenarioSetup {
  TotalState truth;      // initial robot pose and landmarks
  TotalState reference;  // random observer reference (empty unless requested)
};

/// Deterministic under scenario.system.seed.
ScenarioSetup build_scenario(const Scenario& scenario);

/// Gauge-invariant error: RMS over landmarks of the difference of body-frame
/// landmark coordinates. Landmarks with a non-finite estimate are skipped;
/// NaN when none remain.
double rmse(const TotalState& estimate, const TotalState& truth);
/// Inertial RMS error after the best rigid alignment of estimate onto truth.
double rmse_aligned(const TotalState& estimate, const TotalState& truth);

struct EstimatorTrace {
  std::vector<double> rmse;          // one per sample
  std::vector<double> step_seconds;  // one per step
  std::size_t degeneracy_count = 0;
  std::vector<Vec3> position;        // estimated robot position per sample
  std::vector<double> pose_innovation;     // |Delta_A| (observer) per step
  std::vector<double> bearing_innovation;  // RMS |Delta_Q| per step
  std::vector<double> scale_innovation;    // RMS |Delta_a| per step

  /// Median per-step time excluding warm-up steps.
  double median_step_seconds() const;
  double final_rmse() const;
  /// Mean over samples with a defined RMSE.
  double mean_rmse() const;
};

struct TrialRecord {
  std::uint64_t seed = 0;
  std::vector<double> time;
  std::vector<Vec3> true_position;
  /// Per sample, per landmark Lyapunov storage (observer only; NaN when not measured).
  std::vector<std::vector<double>> lyapunov_bearing;
  std::vector<std::vector<double>> lyapunov_depth;
  std::optional<EstimatorTrace> observer;
  std::optional<EstimatorTrace> ekf;
  std::size_t clamp_events = 0;

  std::size_t samples() const { return time.size(); }
};

struct TrialOptions {
  bool record_lyapunov = true;
  /// Steps excluded from the timing median.
  std::size_t warmup_steps = 5;
};

TrialRecord run_trial(const Scenario& scenario, const TrialOptions& options = {});

/// 64-bit seed of trial `index` derived from a base seed (SplitMix64).
std::uint64_t trial_seed(std::uint64_t base, std::uint64_t index);

struct Quartiles {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
  double whisker_low = 0, whisker_high = 0;  // furthest points within 1.5 IQR
  std::vector<double> outliers;
};
/// Linear-interpolation quartiles of `values`, ignoring NaN. Infinite values
/// sort to the ends and count as outliers.
Quartiles summarize(std::vector<double> values);

struct TrialSummary {
  std::size_t landmarks = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string estimator;
  double rmse_final = 0;
  double rmse_mean = 0;
  double median_step_seconds = 0;
  std::size_t degeneracy_count = 0;
};

struct SweepGroup {
  std::string estimator;
  std::size_t landmarks = 0;
  Quartiles rmse_final;
  Quartiles step_seconds;
};

struct SweepResult {
  std::vector<TrialSummary> trials;  // ordered by (landmark count, trial, estimator)
  std::vector<SweepGroup> groups;

  const SweepGroup& group(const std::string& estimator, std::size_t landmarks) const;
};

struct SweepOptions {
  bool parallel = true;
  int jobs = 0;  // 0: OpenMP default
  TrialOptions trial{.record_lyapunov = false};
};

/// Independent seeded trials for each landmark count. Results do not depend on
/// `parallel` or `jobs` except for wall-clock timings.
SweepResult run_sweep(const Scenario& base, const std::vector<std::size_t>& landmark_counts, std::size_t trials,
                      const SweepOptions& options = {});

struct PolyFit {
  std::vector<double> coefficients;  // constant term first
  double rss = 0;
  double r_squared = 0;
  double aic = 0;
};

struct ComplexityFit {
  PolyFit linear;
  PolyFit quadratic;
  bool prefers_quadratic = false;
  std::string preferred() const { return prefers_quadratic ? "quadratic" : "linear"; }
};

/// Least-squares fits t = a + b n and t = a + b n + c n^2 compared by AIC.
/// Throws PreconditionError with fewer than four distinct n values.
ComplexityFit complexity_fit(const std::vector<double>& n, const std::vector<double>& t);

}  // namespace vslam

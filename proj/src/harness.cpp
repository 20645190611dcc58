#include "vslam/harness.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include <omp.h>

namespace vslam {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream identifiers mixed into the trial seed.
constexpr std::uint64_t kLandmarkStream = 1;
constexpr std::uint64_t kReferenceStream = 2;
constexpr std::uint64_t kSensorStream = 3;

Vec3 random_point_in_band(const Scenario& sc, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec3& omega = sc.velocity.angular;
  const Vec3& v = sc.velocity.linear;
  const double w = omega.norm();
  if (w > 1e-9 && v.norm() > 1e-9) {
    // Circle in the plane orthogonal to omega through the start pose.
    const Vec3 centre = omega.cross(v) / (w * w);
    const double radius = centre.norm();
    const Vec3 e1 = -centre / radius;
    const Vec3 e2 = (omega / w).cross(e1);
    const double lo = std::max(0.0, radius - sc.band_outer);
    const double hi = radius + sc.band_outer;
    for (;;) {
      const double rho = std::sqrt(lo * lo + unit(rng) * (hi * hi - lo * lo));
      const double theta = 2.0 * std::numbers::pi * unit(rng);
      if (std::abs(rho - radius) < sc.band_inner) continue;
      return centre + rho * (std::cos(theta) * e1 + std::sin(theta) * e2);
    }
  }
  if (v.norm() > 1e-9) {
    // Straight path: uniform along the segment, lateral offset in the ground plane.
    const Vec3 dir = v.normalized();
    const Vec3 lateral = Vec3::UnitZ().cross(dir).norm() > 1e-9 ? Vec3(Vec3::UnitZ().cross(dir).normalized())
                                                                 : Vec3(dir.unitOrthogonal());
    const double length = v.norm() * sc.duration;
    const double s = unit(rng) * length;
    const double off = sc.band_inner + unit(rng) * (sc.band_outer - sc.band_inner);
    return s * dir + (unit(rng) < 0.5 ? -off : off) * lateral;
  }
  const double rho = sc.band_inner + unit(rng) * (sc.band_outer - sc.band_inner);
  const double theta = 2.0 * std::numbers::pi * unit(rng);
  return rho * Vec3(std::cos(theta), std::sin(theta), 0.0);
}

TotalState random_reference(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> box(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  TotalState ref;
  const Vec3 axis = Vec3(box(rng), box(rng), box(rng)).normalized();
  ref.pose.rotation = so3_exp(axis * angle(rng));
  ref.pose.translation = Vec3(box(rng), box(rng), box(rng));
  ref.landmarks.resize(n);
  for (auto& p : ref.landmarks) {
    do {
      p = 2.0 * Vec3(box(rng), box(rng), box(rng));
    } while ((p - ref.pose.translation).norm() < 0.3);
  }
  return ref;
}

template <typename State, typename Init, typename Freeze, typename Unfreeze>
void apply_lifecycle(State& st, const MeasurementFrame& frame, Init init, Freeze freeze_fn, Unfreeze unfreeze_fn) {
  for (std::size_t i = 0; i < st.status.size(); ++i) {
    const LandmarkStatus s = st.status[i];
    if (frame.visible[i]) {
      if (s == LandmarkStatus::uninitialized) st = init(std::move(st), i);
      else if (s == LandmarkStatus::frozen) st = unfreeze_fn(std::move(st), i);
    } else if (s == LandmarkStatus::active) {
      st = freeze_fn(std::move(st), i);
    }
  }
}

double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void Scenario::validate() const {
  if (!(duration >= 0.0)) throw PreconditionError("scenario: duration must be non-negative");
  if (!(dt > 0.0)) throw PreconditionError("scenario: dt must be positive");
  if (!(band_inner > 0.0 && band_inner < band_outer)) {
    throw PreconditionError("scenario: band radii must satisfy 0 < inner < outer");
  }
  system.validate();
  gains.validate();
}

std::size_t Scenario::step_count() const { return static_cast<std::size_t>(std::llround(duration / dt)); }

Scenario Scenario::lyapunov_preset() {
  Scenario sc;
  sc.system.landmark_count = 10;
  sc.system.seed = 1;
  sc.gains = {0.05, 0.02, 0.03};
  sc.random_reference = true;
  sc.estimators = EstimatorSelection::observer;
  return sc;
}

Scenario Scenario::comparison_preset() {
  Scenario sc;
  sc.system.landmark_count = 50;
  sc.system.sensor_range = 1.0;
  sc.system.var_linear = 0.2;
  sc.system.var_angular = 0.1;
  sc.system.var_flow = 0.02;
  sc.system.var_bearing = 0.01;
  sc.system.var_inv_depth = 0.4;
  sc.system.seed = 1;
  sc.gains = {0.25, 0.1, 0.1};
  sc.estimators = EstimatorSelection::both;
  return sc;
}

ScenarioSetup build_scenario(const Scenario& scenario) {
  scenario.validate();
  const std::size_t n = scenario.system.landmark_count;
  ScenarioSetup setup;
  setup.truth.pose = Pose::identity();
  std::mt19937_64 lm_rng(trial_seed(scenario.system.seed, kLandmarkStream));
  setup.truth.landmarks.resize(n);
  for (auto& p : setup.truth.landmarks) p = random_point_in_band(scenario, lm_rng);
  if (scenario.random_reference) {
    std::mt19937_64 ref_rng(trial_seed(scenario.system.seed, kReferenceStream));
    setup.reference = random_reference(n, ref_rng);
  }
  return setup;
}

double rmse(const TotalState& estimate, const TotalState& truth) {
  if (estimate.size() != truth.size()) throw StructuralError("rmse: landmark count mismatch");
  const Pose est_inv = estimate.pose.inverse();
  const Pose true_inv = truth.pose.inverse();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    if (!estimate.landmarks[i].allFinite()) continue;
    sum += (est_inv.transform(estimate.landmarks[i]) - true_inv.transform(truth.landmarks[i])).squaredNorm();
    ++count;
  }
  return count == 0 ? kNaN : std::sqrt(sum / static_cast<double>(count));
}

double rmse_aligned(const TotalState& estimate, const TotalState& truth) {
  if (estimate.size() != truth.size()) throw StructuralError("rmse_aligned: landmark count mismatch");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    if (estimate.landmarks[i].allFinite()) idx.push_back(i);
  }
  if (idx.size() < 3) return kNaN;
  Eigen::Matrix3Xd src(3, idx.size()), dst(3, idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    src.col(static_cast<Eigen::Index>(j)) = estimate.landmarks[idx[j]];
    dst.col(static_cast<Eigen::Index>(j)) = truth.landmarks[idx[j]];
  }
  const Mat4 t = Eigen::umeyama(src, dst, false);
  const Eigen::Matrix3Xd aligned = (t.topLeftCorner<3, 3>() * src).colwise() + t.topRightCorner<3, 1>();
  return std::sqrt((aligned - dst).colwise().squaredNorm().mean());
}

double EstimatorTrace::median_step_seconds() const {
  // Warm-up steps are dropped by run_trial before they reach step_seconds.
  return summarize(step_seconds).median;
}

double EstimatorTrace::final_rmse() const { return rmse.empty() ? kNaN : rmse.back(); }

double EstimatorTrace::mean_rmse() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (double r : rmse) {
    if (std::isfinite(r)) {
      sum += r;
      ++count;
    }
  }
  return count == 0 ? kNaN : sum / static_cast<double>(count);
}

TrialRecord run_trial(const Scenario& scenario, const TrialOptions& options) {
  const ScenarioSetup setup = build_scenario(scenario);
  const std::size_t n = scenario.system.landmark_count;
  const std::size_t steps = scenario.step_count();
  const double dt = scenario.dt;
  const bool use_observer = scenario.estimators != EstimatorSelection::ekf;
  const bool use_ekf = scenario.estimators != EstimatorSelection::observer;

  SystemParams sensor_params = scenario.system;
  sensor_params.seed = trial_seed(scenario.system.seed, kSensorStream);
  Sensor sensor(sensor_params);
  const EkfNoise ekf_noise = EkfNoise::from(scenario.system);

  TotalState truth = setup.truth;
  ObserverState obs = scenario.random_reference
                          ? make_observer(setup.reference, scenario.gains, scenario.observer_options)
                          : make_observer(n, truth.pose, scenario.gains, scenario.observer_options);
  EkfState ekf = make_ekf(n, truth.pose, Mat6::Zero(), scenario.ekf_execution);

  TrialRecord rec;
  rec.seed = scenario.system.seed;
  if (use_observer) rec.observer.emplace();
  if (use_ekf) rec.ekf.emplace();

  const auto obs_init = [](ObserverState s, std::size_t i, const MeasurementFrame& f) {
    return initialize_landmark(std::move(s), i, f);
  };
  const auto ekf_init = [&ekf_noise](EkfState s, std::size_t i, const MeasurementFrame& f) {
    return ekf_init_landmark(std::move(s), i, f, ekf_noise);
  };

  MeasurementFrame previous;
  bool have_previous = false;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const MeasurementFrame frame = sensor.sense(truth, scenario.velocity, t, have_previous ? &previous : nullptr);

    if (use_observer) {
      apply_lifecycle(
          obs, frame, [&](ObserverState s, std::size_t i) { return obs_init(std::move(s), i, frame); },
          [](ObserverState s, std::size_t i) { return freeze(std::move(s), i); },
          [](ObserverState s, std::size_t i) { return unfreeze(std::move(s), i); });
    }
    if (use_ekf) {
      apply_lifecycle(
          ekf, frame, [&](EkfState s, std::size_t i) { return ekf_init(std::move(s), i, frame); },
          [](EkfState s, std::size_t i) { return ekf_freeze(std::move(s), i); },
          [](EkfState s, std::size_t i) { return ekf_unfreeze(std::move(s), i); });
    }

    rec.time.push_back(t);
    rec.true_position.push_back(truth.pose.translation);
    if (use_observer) {
      const TotalState est = reconstruct(obs);
      rec.observer->rmse.push_back(rmse(est, truth));
      rec.observer->position.push_back(est.pose.translation);
      if (options.record_lyapunov) {
        LyapunovSample l = lyapunov(obs, frame);
        rec.lyapunov_bearing.push_back(std::move(l.bearing));
        rec.lyapunov_depth.push_back(std::move(l.depth));
      }
    }
    if (use_ekf) {
      rec.ekf->rmse.push_back(rmse(ekf.mean, truth));
      rec.ekf->position.push_back(ekf.mean.pose.translation);
    }
    if (k == steps) break;

    if (use_observer) {
      Innovation inn;
      const auto start = Clock::now();
      obs = step(std::move(obs), frame, dt, inn);
      const double elapsed = seconds_since(start);
      if (k >= options.warmup_steps) rec.observer->step_seconds.push_back(elapsed);
      if (inn.degenerate) ++rec.observer->degeneracy_count;
      rec.observer->pose_innovation.push_back(inn.pose.vector().norm());
      std::vector<double> qn, an;
      for (std::size_t i = 0; i < n; ++i) {
        if (obs.status[i] != LandmarkStatus::active) continue;
        qn.push_back(inn.bearing[i].norm());
        an.push_back(inn.scale[i]);
      }
      rec.observer->bearing_innovation.push_back(rms(qn));
      rec.observer->scale_innovation.push_back(rms(an));
    }
    if (use_ekf) {
      EkfUpdateReport report;
      const auto start = Clock::now();
      ekf = ekf_update(std::move(ekf), frame, ekf_noise, report);
      ekf = ekf_predict(std::move(ekf), frame.velocity.velocity, dt, ekf_noise);
      const double elapsed = seconds_since(start);
      if (k >= options.warmup_steps) rec.ekf->step_seconds.push_back(elapsed);
      if (report.skipped) ++rec.ekf->degeneracy_count;
    }

    truth = propagate(truth, scenario.velocity, dt);
    previous = frame;
    have_previous = true;
  }
  rec.clamp_events = sensor.clamp_events();
  return rec;
}

std::uint64_t trial_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Quartiles summarize(std::vector<double> values) {
  std::erase_if(values, [](double v) { return std::isnan(v); });
  Quartiles q;
  if (values.empty()) {
    q.min = q.q1 = q.median = q.q3 = q.max = q.mean = q.whisker_low = q.whisker_high = kNaN;
    return q;
  }
  std::sort(values.begin(), values.end());
  const auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    // Avoids 0 * inf when a neighbour is infinite.
    return frac == 0.0 ? values[lo] : values[lo] + frac * (values[hi] - values[lo]);
  };
  q.min = values.front();
  q.max = values.back();
  q.q1 = quantile(0.25);
  q.median = quantile(0.5);
  q.q3 = quantile(0.75);
  double sum = 0.0;
  for (double v : values) sum += v;
  q.mean = sum / static_cast<double>(values.size());
  const double iqr = q.q3 - q.q1;
  const double lo_fence = q.q1 - 1.5 * iqr;
  const double hi_fence = q.q3 + 1.5 * iqr;
  q.whisker_low = q.q1;
  q.whisker_high = q.q3;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      q.outliers.push_back(v);
    } else {
      q.whisker_low = std::min(q.whisker_low, v);
      q.whisker_high = std::max(q.whisker_high, v);
    }
  }
  return q;
}

const SweepGroup& SweepResult::group(const std::string& estimator, std::size_t landmarks) const {
  for (const auto& g : groups) {
    if (g.estimator == estimator && g.landmarks == landmarks) return g;
  }
  throw PreconditionError("sweep: no group for " + estimator + " with " + std::to_string(landmarks) + " landmarks");
}

SweepResult run_sweep(const Scenario& base, const std::vector<std::size_t>& landmark_counts, std::size_t trials,
                      const SweepOptions& options) {
  if (landmark_counts.empty() || trials == 0) throw PreconditionError("run_sweep: need counts and trials");
  for (std::size_t n : landmark_counts) {
    if (n < 1) throw PreconditionError("run_sweep: landmark counts must be >= 1");
  }
  struct Job {
    Scenario scenario;
    std::size_t count_index;
    std::size_t trial;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < landmark_counts.size(); ++c) {
    for (std::size_t t = 0; t < trials; ++t) {
      Scenario sc = base;
      sc.system.landmark_count = landmark_counts[c];
      sc.system.seed = trial_seed(trial_seed(base.system.seed, landmark_counts[c]), t);
      jobs.push_back({sc, c, t});
    }
  }
  std::vector<TrialRecord> records(jobs.size());
  const int threads = options.jobs > 0 ? options.jobs : omp_get_max_threads();
  const auto total = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (options.parallel)
  for (std::ptrdiff_t j = 0; j < total; ++j) {
    records[static_cast<std::size_t>(j)] = run_trial(jobs[static_cast<std::size_t>(j)].scenario, options.trial);
  }

  SweepResult out;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto add = [&](const std::string& name, const EstimatorTrace& tr) {
      out.trials.push_back({landmark_counts[jobs[j].count_index], jobs[j].trial, jobs[j].scenario.system.seed, name,
                            tr.final_rmse(), tr.mean_rmse(), tr.median_step_seconds(), tr.degeneracy_count});
    };
    if (records[j].observer) add("observer", *records[j].observer);
    if (records[j].ekf) add("ekf", *records[j].ekf);
  }
  for (std::size_t n : landmark_counts) {
    for (const std::string name : {"observer", "ekf"}) {
      std::vector<double> rm, st;
      for (const auto& t : out.trials) {
        if (t.landmarks == n && t.estimator == name) {
          rm.push_back(t.rmse_final);
          st.push_back(t.median_step_seconds);
        }
      }
      if (!rm.empty()) out.groups.push_back({name, n, summarize(rm), summarize(st)});
    }
  }
  return out;
}

namespace {

PolyFit fit_polynomial(const std::vector<double>& n, const std::vector<double>& t, int degree) {
  const auto rows = static_cast<Eigen::Index>(n.size());
  Eigen::MatrixXd a(rows, degree + 1);
  Eigen::VectorXd b(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double p = 1.0;
    for (int c = 0; c <= degree; ++c) {
      a(r, c) = p;
      p *= n[static_cast<std::size_t>(r)];
    }
    b(r) = t[static_cast<std::size_t>(r)];
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
  PolyFit fit;
  fit.coefficients.assign(coef.data(), coef.data() + coef.size());
  fit.rss = (a * coef - b).squaredNorm();
  const double tss = (b.array() - b.mean()).square().sum();
  fit.r_squared = tss > 0.0 ? 1.0 - fit.rss / tss : 1.0;
  return fit;
}

}  // namespace

ComplexityFit complexity_fit(const std::vector<double>& n, const std::vector<double>& t) {
  if (n.size() != t.size()) throw PreconditionError("complexity_fit: size mismatch");
  std::vector<double> distinct = n;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 4) throw PreconditionError("complexity_fit: need at least four distinct n values");

  ComplexityFit out;
  out.linear = fit_polynomial(n, t, 1);
  out.quadratic = fit_polynomial(n, t, 2);
  // Exact fits have RSS at round-off level; floor both relative to the data
  // spread so that ties resolve to the simpler model.
  double mean = 0.0;
  for (double v : t) mean += v;
  mean /= static_cast<double>(t.size());
  double tss = 0.0;
  for (double v : t) tss += (v - mean) * (v - mean);
  const double floor = std::max(1e-18 * tss, 1e-300);
  const auto samples = static_cast<double>(t.size());
  const auto aic = [&](const PolyFit& f) {
    return samples * std::log(std::max(f.rss, floor) / samples) + 2.0 * static_cast<double>(f.coefficients.size());
  };
  out.linear.aic = aic(out.linear);
  out.quadratic.aic = aic(out.quadratic);
  out.prefers_quadratic = out.quadratic.aic < out.linear.aic;
  return out;
}

}  // namespace vslam

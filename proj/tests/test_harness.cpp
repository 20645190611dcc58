#include "test_support.hpp"
#include "vslam/checks.hpp"
#include "vslam/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

using namespace vslam;

namespace {

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

double lyapunov_total(const TrialRecord& rec, std::size_t k) {
  double sum = 0.0;
  for (double v : rec.lyapunov_bearing[k]) sum += v;
  for (double v : rec.lyapunov_depth[k]) sum += v;
  return sum;
}

}  // namespace

TEST(Scenario, PresetsValidate) {
  EXPECT_NO_THROW(Scenario::lyapunov_preset().validate());
  EXPECT_NO_THROW(Scenario::comparison_preset().validate());
  EXPECT_EQ(Scenario::lyapunov_preset().step_count(), 200u);
  Scenario bad = Scenario::lyapunov_preset();
  bad.band_inner = 2.0;
  EXPECT_THROW(bad.validate(), PreconditionError);
  bad = Scenario::lyapunov_preset();
  bad.dt = 0.0;
  EXPECT_THROW(bad.validate(), PreconditionError);
}

TEST(Scenario, SameSeedSameLandmarks) {
  const Scenario sc = Scenario::comparison_preset();
  const ScenarioSetup a = build_scenario(sc), b = build_scenario(sc);
  ASSERT_EQ(a.truth.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(a.truth.landmarks[i], b.truth.landmarks[i]);
  Scenario other = sc;
  other.system.seed = 2;
  EXPECT_NE(build_scenario(other).truth.landmarks[0], a.truth.landmarks[0]);
}

TEST(Scenario, LandmarksStayInsideTheBand) {
  const Scenario sc = Scenario::comparison_preset();
  const ScenarioSetup s = build_scenario(sc);
  // The default velocity drives a circle of radius v / w about (0, R, 0).
  const double radius = 0.1 / (0.02 * 3.141592653589793);
  for (const Vec3& p : s.truth.landmarks) {
    EXPECT_NEAR(p.z(), 0.0, 1e-12);
    const double off = std::abs((p - Vec3(0, radius, 0)).norm() - radius);
    EXPECT_GE(off, sc.band_inner);
    EXPECT_LE(off, sc.band_outer + 1e-12);
  }
}

TEST(Trial, SampleCounts) {
  Scenario sc = Scenario::lyapunov_preset();
  EXPECT_EQ(run_trial(sc).samples(), 201u);
  sc.duration = 0.0;
  const TrialRecord rec = run_trial(sc);
  EXPECT_EQ(rec.samples(), 1u);
  EXPECT_TRUE(rec.observer->step_seconds.empty());
}

TEST(Trial, NoiseFreeComparisonConverges) {
  Scenario sc = Scenario::comparison_preset();
  sc.system.var_linear = sc.system.var_angular = sc.system.var_flow = 0.0;
  sc.system.var_bearing = sc.system.var_inv_depth = 0.0;
  const TrialRecord rec = run_trial(sc);
  EXPECT_LT(rec.observer->final_rmse(), 1e-9);
  EXPECT_LT(rec.ekf->final_rmse(), 1e-9);
  EXPECT_EQ(rec.clamp_events, 0u);
}

TEST(Trial, LyapunovIsMonotoneAcrossSeeds) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Scenario sc = Scenario::lyapunov_preset();
    sc.system.seed = seed;
    const TrialRecord rec = run_trial(sc);
    const double l0 = lyapunov_total(rec, 0);
    double worst = 0.0;
    for (std::size_t k = 1; k < rec.samples(); ++k) {
      worst = std::max(worst, lyapunov_total(rec, k) - lyapunov_total(rec, k - 1));
    }
    EXPECT_LE(worst, 1e-12 * l0) << "seed " << seed;
  }
}

TEST(Metrics, RmseIsGaugeInvariant) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const TotalState truth = random_total_state(7, rng);
    TotalState est = truth;
    for (auto& p : est.landmarks) p += 0.05 * Vec3::Random();
    const Pose g{random_rotation(rng), 5.0 * Vec3::Random()};
    TotalState moved{g * est.pose, {}};
    for (const Vec3& p : est.landmarks) moved.landmarks.push_back(g.transform(p));
    EXPECT_NEAR(rmse(moved, truth), rmse(est, truth), 1e-10);
    EXPECT_NEAR(rmse_aligned(moved, truth), rmse_aligned(est, truth), 1e-10);
  }
}

TEST(Metrics, SingleDisplacedLandmark) {
  const TotalState truth{Pose::identity(), {Vec3(1, 0, 0)}};
  const TotalState est{Pose::identity(), {Vec3(1.3, 0, 0)}};
  EXPECT_NEAR(rmse(est, truth), 0.3, 1e-15);
}

TEST(Metrics, NonFiniteLandmarksAreSkipped) {
  const TotalState truth{Pose::identity(), {Vec3(1, 0, 0), Vec3(0, 1, 0)}};
  TotalState est{Pose::identity(), {Vec3(1, 0, 0), Vec3::Constant(std::nan(""))}};
  EXPECT_EQ(rmse(est, truth), 0.0);
  est.landmarks[0] = est.landmarks[1];
  EXPECT_TRUE(std::isnan(rmse(est, truth)));
  EXPECT_THROW(rmse(TotalState{Pose::identity(), {}}, truth), StructuralError);
}

TEST(Metrics, TrialSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(trial_seed(1, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(trial_seed(7, 3), trial_seed(7, 3));
}

TEST(Summary, QuartilesAndOutliers) {
  const Quartiles q = summarize({1, 2, 3, 4, 5, 6, 7, 8, 9, 100, std::nan("")});
  EXPECT_DOUBLE_EQ(q.median, 5.5);
  EXPECT_DOUBLE_EQ(q.q1, 3.25);
  EXPECT_DOUBLE_EQ(q.q3, 7.75);
  ASSERT_EQ(q.outliers.size(), 1u);
  EXPECT_EQ(q.outliers[0], 100.0);
  EXPECT_EQ(q.whisker_high, 9.0);
  EXPECT_EQ(q.whisker_low, 1.0);
  EXPECT_EQ(q.max, 100.0);
}

TEST(Summary, InfinityCountsAsOutlier) {
  const Quartiles q = summarize({1, 2, 3, 4, std::numeric_limits<double>::infinity()});
  EXPECT_EQ(q.outliers.size(), 1u);
  EXPECT_TRUE(std::isnan(summarize({}).median));
}

TEST(Sweep, ResultsDoNotDependOnParallelism) {
  Scenario sc = Scenario::comparison_preset();
  sc.duration = 30.0;
  const SweepResult a = run_sweep(sc, {5, 12}, 4, {.parallel = false, .jobs = 0, .trial = {}});
  const SweepResult b = run_sweep(sc, {5, 12}, 4, {.parallel = true, .jobs = 3, .trial = {}});
  ASSERT_EQ(a.trials.size(), 16u);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t j = 0; j < a.trials.size(); ++j) {
    EXPECT_EQ(a.trials[j].seed, b.trials[j].seed);
    EXPECT_EQ(a.trials[j].estimator, b.trials[j].estimator);
    EXPECT_TRUE(same(a.trials[j].rmse_final, b.trials[j].rmse_final));
  }
  EXPECT_TRUE(same(a.group("ekf", 12).rmse_final.median, b.group("ekf", 12).rmse_final.median));
  EXPECT_THROW(a.group("ekf", 7), PreconditionError);
}

TEST(Sweep, EstimatorsShareTheTrialStream) {
  Scenario sc = Scenario::comparison_preset();
  sc.duration = 30.0;
  const SweepResult both = run_sweep(sc, {8}, 3, {.parallel = false, .jobs = 0, .trial = {}});
  sc.estimators = EstimatorSelection::observer;
  const SweepResult obs = run_sweep(sc, {8}, 3, {.parallel = false, .jobs = 0, .trial = {}});
  sc.estimators = EstimatorSelection::ekf;
  const SweepResult ekf = run_sweep(sc, {8}, 3, {.parallel = false, .jobs = 0, .trial = {}});
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(both.trials[2 * t].estimator, "observer");
    EXPECT_TRUE(same(both.trials[2 * t].rmse_final, obs.trials[t].rmse_final));
    EXPECT_TRUE(same(both.trials[2 * t + 1].rmse_final, ekf.trials[t].rmse_final));
    EXPECT_EQ(both.trials[2 * t].seed, both.trials[2 * t + 1].seed);
  }
}

TEST(Sweep, RejectsEmptyInput) {
  EXPECT_THROW(run_sweep(Scenario::comparison_preset(), {}, 3), PreconditionError);
  EXPECT_THROW(run_sweep(Scenario::comparison_preset(), {5}, 0), PreconditionError);
}

TEST(ComplexityFit, RecoversLinearAndQuadraticModels) {
  const std::vector<double> n{10, 25, 50, 100, 200, 400};
  std::vector<double> lin, quad;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (double x : n) {
    lin.push_back(2.0 + 0.5 * x + noise(rng));
    quad.push_back(1.0 + 0.1 * x + 0.01 * x * x + noise(rng));
  }
  const ComplexityFit fl = complexity_fit(n, lin);
  EXPECT_NEAR(fl.linear.coefficients[1], 0.5, 1e-4);
  EXPECT_GT(fl.linear.r_squared, 0.999);
  const ComplexityFit fq = complexity_fit(n, quad);
  EXPECT_TRUE(fq.prefers_quadratic);
  EXPECT_NEAR(fq.quadratic.coefficients[2], 0.01, 1e-6);
  EXPECT_EQ(fq.preferred(), "quadratic");
}

TEST(ComplexityFit, NeedsFourDistinctCounts) {
  EXPECT_THROW(complexity_fit({1, 2, 3, 3}, {1, 2, 3, 3}), PreconditionError);
  EXPECT_NO_THROW(complexity_fit({1, 2, 3, 4}, {1, 2, 3, 4}));
}

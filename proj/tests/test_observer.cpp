#include "test_support.hpp"
#include "vslam/checks.hpp"
#include "vslam/observer.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vslam;
using test::max_abs_diff;

namespace {

MeasurementFrame exact_frame(const TotalState& truth, const Twist& u, double t = 0.0) {
  SystemParams p;
  p.landmark_count = truth.size();
  Sensor sensor(p);
  return sensor.sense(truth, u, t);
}

// Observer whose configuration estimate coincides with `truth` under estimate X.
ObserverState observer_at_truth(const TotalState& truth, const GroupElement& x, ObserverGains gains = {}) {
  ObserverState st = make_observer(state_action(group_inverse(x), truth), gains);
  st.estimate = x;
  return st;
}

double max_output_gap(const Output& a, const Output& b) {
  double g = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    g = std::max(g, (a[i].direction - b[i].direction).norm());
    g = std::max(g, std::abs(a[i].inverse_depth - b[i].inverse_depth) / b[i].inverse_depth);
  }
  return g;
}

}  // namespace

TEST(Observer, IdentityEstimateReproducesReference) {
  std::mt19937_64 rng(1);
  const TotalState ref = random_total_state(5, rng);
  const ObserverState st = make_observer(ref, {});
  EXPECT_LT(max_output_gap(estimated_output(st), measure(ref)), 1e-15);
  const TotalState rec = reconstruct(st);
  EXPECT_LT(max_abs_diff(rec.pose.homogeneous(), ref.pose.homogeneous()), 1e-15);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_LT((rec.landmarks[i] - ref.landmarks[i]).norm(), 1e-13);
}

TEST(Observer, DoublingScaleDoublesInverseDepth) {
  const TotalState ref{Pose::identity(), {Vec3(0, 0, 4)}};
  ObserverState st = make_observer(ref, {});
  st.estimate.landmarks[0].scale = 2.0;
  EXPECT_DOUBLE_EQ(estimated_output(st, 0).inverse_depth, 0.5);
  EXPECT_LT((reconstruct(st).landmarks[0] - Vec3(0, 0, 2)).norm(), 1e-15);
}

TEST(Observer, InvalidGainsRejected) {
  const TotalState ref{Pose::identity(), {Vec3(0, 0, 4)}};
  EXPECT_THROW(make_observer(ref, {.bearing = 0.0, .scale = 1, .pose = 1}), PreconditionError);
}

TEST(Innovation, VanishesAtTruth) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const TotalState truth = random_total_state(8, rng);
    const GroupElement x = random_group_element(8, rng);
    const ObserverState st = observer_at_truth(truth, x);
    const Innovation inn = innovation(st, exact_frame(truth, random_twist(rng)));
    ASSERT_FALSE(inn.degenerate);
    EXPECT_LT(inn.pose.vector().norm(), 1e-10);
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_LT(inn.bearing[i].norm(), 1e-12);
      EXPECT_LT(std::abs(inn.scale[i]), 1e-12);
    }
  }
}

TEST(Innovation, SingleLandmarkIsDegenerate) {
  const TotalState truth{Pose::identity(), {Vec3(0, 0, 2)}};
  const ObserverState st = make_observer(truth, {});
  const Innovation inn = innovation(st, exact_frame(truth, Twist{}));
  EXPECT_TRUE(inn.degenerate);
  EXPECT_EQ(inn.pose.vector(), Vec6::Zero());
  EXPECT_GT(inn.condition, tol::kMaxCondition);
}

TEST(Innovation, ActiveInvisibleLandmarkIsLifecycleError) {
  const TotalState truth{Pose::identity(), {Vec3(0, 0, 2), Vec3(0, 1, 2)}};
  const ObserverState st = make_observer(truth, {});
  MeasurementFrame frame = exact_frame(truth, Twist{});
  frame.visible[1] = false;
  EXPECT_THROW(innovation(st, frame), LifecycleError);
}

TEST(Step, ScaleCorrectionDrivesDepthErrorToReference) {
  const TotalState truth{Pose::identity(), {Vec3(0, 0, 2), Vec3(1, 0, 2), Vec3(0, 1, 3)}};
  ObserverState st = make_observer(truth, {.bearing = 1.0, .scale = 1.0, .pose = 1.0});
  st.estimate.landmarks[1].scale = 3.0;
  const MeasurementFrame frame = exact_frame(truth, Twist{});
  const double target = st.reference_output[1].inverse_depth;
  double last = std::abs(output_error(st, 1, frame.output[1]).inverse_depth - target);
  for (int k = 0; k < 40; ++k) {
    st = step(std::move(st), frame, 0.5);
    const double gap = std::abs(output_error(st, 1, frame.output[1]).inverse_depth - target);
    EXPECT_LE(gap, last);
    last = gap;
    EXPECT_GT(st.estimate.landmarks[1].scale, 0.0);
  }
  EXPECT_LT(last, 1e-8);
}

TEST(Step, LyapunovIsMonotoneNoiseFree) {
  std::mt19937_64 rng(3);
  const TotalState truth0 = random_total_state(10, rng);
  const TotalState reference = random_total_state(10, rng);
  const Twist u{Vec3(0, 0, 0.05), Vec3(0.05, 0, 0)};
  ObserverState st = make_observer(reference, {.bearing = 0.05, .scale = 0.02, .pose = 0.03});
  TotalState truth = truth0;
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 40; ++k) {
    const MeasurementFrame frame = exact_frame(truth, u, 0.5 * k);
    const double l = lyapunov(st, frame).total();
    EXPECT_LE(l, previous * (1 + 1e-12));
    previous = l;
    st = step(std::move(st), frame, 0.5);
    ASSERT_TRUE(st.estimate.valid());
    truth = propagate(truth, u, 0.5);
  }
}

TEST(Step, ErrorDynamicsDoNotDependOnTrajectory) {
  std::mt19937_64 rng(4);
  const std::size_t n = 6;
  TotalState a{Pose::identity(), {}};
  for (std::size_t i = 0; i < n; ++i) a.landmarks.push_back(Vec3(std::cos(i), std::sin(i), 3.0 + 0.2 * i));
  const Pose g{random_rotation(rng), Vec3(1, -2, 0.5)};
  TotalState b{g * a.pose, {}};
  for (const Vec3& p : a.landmarks) b.landmarks.push_back(g.transform(p));
  const Twist ua{Vec3(0.02, -0.01, 0.03), Vec3(0.05, 0.0, 0.02)};
  const Twist ub{Vec3(-0.03, 0.02, 0.0), Vec3(0.0, 0.04, -0.03)};

  const TotalState reference = random_total_state(n, rng);
  ObserverState sa = make_observer(reference, {.bearing = 0.3, .scale = 0.2, .pose = 0.1});
  ObserverState sb = sa;
  double gap = 0.0;
  for (int k = 0; k < 40; ++k) {
    const MeasurementFrame fa = exact_frame(a, ua), fb = exact_frame(b, ub);
    gap = std::max(gap, max_output_gap(output_error(sa, fa.output), output_error(sb, fb.output)));
    sa = step(std::move(sa), fa, 0.1);
    sb = step(std::move(sb), fb, 0.1);
    a = propagate(a, ua, 0.1);
    b = propagate(b, ub, 0.1);
  }
  EXPECT_LT(gap, 1e-8);
}

TEST(Step, TracksOutputsOfExactRun) {
  std::mt19937_64 rng(5);
  TotalState truth = random_total_state(8, rng);
  const Twist u{Vec3(0.01, 0.02, -0.01), Vec3(0.02, 0.01, 0.0)};
  ObserverState st = make_observer(random_total_state(8, rng), {.bearing = 1.0, .scale = 1.0, .pose = 1.0});
  MeasurementFrame frame;
  for (int k = 0; k < 100; ++k) {
    frame = exact_frame(truth, u);
    st = step(std::move(st), frame, 0.5);
    truth = propagate(truth, u, 0.5);
  }
  EXPECT_LT(max_output_gap(estimated_output(st), measure(truth)), 1e-6);
}

TEST(Step, SerialAndParallelAgreeBitForBit) {
  std::mt19937_64 rng(6);
  const TotalState truth = random_total_state(64, rng);
  const TotalState reference = random_total_state(64, rng);
  SystemParams p;
  p.landmark_count = 64;
  p.var_bearing = p.var_flow = p.var_inv_depth = p.var_linear = p.var_angular = 0.01;
  p.seed = 3;
  Sensor sensor(p);
  const MeasurementFrame frame = sensor.sense(truth, random_twist(rng), 0.0);
  ObserverState serial = make_observer(reference, {}, {Integrator::geometric, Execution::serial});
  ObserverState parallel = make_observer(reference, {}, {Integrator::geometric, Execution::parallel});
  for (int k = 0; k < 10; ++k) {
    serial = step(std::move(serial), frame, 0.5);
    parallel = step(std::move(parallel), frame, 0.5);
  }
  EXPECT_EQ(serial.estimate.pose.homogeneous(), parallel.estimate.pose.homogeneous());
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(serial.estimate.landmarks[i].rotation, parallel.estimate.landmarks[i].rotation);
    EXPECT_EQ(serial.estimate.landmarks[i].scale, parallel.estimate.landmarks[i].scale);
  }
}

TEST(Step, AdditiveIntegratorStaysOnGroupAndConverges) {
  std::mt19937_64 rng(7);
  const TotalState truth = random_total_state(6, rng);
  ObserverState st = make_observer(random_total_state(6, rng), {.bearing = 0.5, .scale = 0.5, .pose = 0.5},
                                   {Integrator::additive, Execution::serial});
  const MeasurementFrame frame = exact_frame(truth, Twist{});
  for (int k = 0; k < 200; ++k) {
    st = step(std::move(st), frame, 0.1);
    ASSERT_TRUE(st.estimate.valid());
  }
  EXPECT_LT(max_output_gap(estimated_output(st), measure(truth)), 1e-3);
}

TEST(Step, RequiresPositiveDt) {
  const TotalState truth{Pose::identity(), {Vec3(0, 0, 2)}};
  EXPECT_THROW(step(make_observer(truth, {}), exact_frame(truth, Twist{}), 0.0), PreconditionError);
}

TEST(Lifecycle, InitializationMatchesMeasurement) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 50; ++k) {
    const TotalState truth = random_total_state(4, rng);
    ObserverState st = make_observer(4, Pose{random_rotation(rng), Vec3::Random()}, {});
    st.estimate.pose = random_group_element(0, rng).pose;
    const MeasurementFrame frame = exact_frame(truth, Twist{});
    EXPECT_THROW(estimated_output(st, 2), LifecycleError);
    st = initialize_landmark(std::move(st), 2, frame);
    EXPECT_LT((estimated_output(st, 2).direction - frame.output[2].direction).norm(), 1e-9);
    EXPECT_NEAR(estimated_output(st, 2).inverse_depth, frame.output[2].inverse_depth,
                1e-9 * frame.output[2].inverse_depth);
    EXPECT_THROW(initialize_landmark(st, 2, frame), LifecycleError);
    EXPECT_TRUE(reconstruct(st).landmarks[0].array().isNaN().all());
  }
}

TEST(Lifecycle, InvisibleLandmarkCannotBeInitialized) {
  const TotalState truth{Pose::identity(), {Vec3(0, 0, 2)}};
  ObserverState st = make_observer(1, Pose::identity(), {});
  MeasurementFrame frame = exact_frame(truth, Twist{});
  frame.visible[0] = false;
  EXPECT_THROW(initialize_landmark(st, 0, frame), LifecycleError);
}

TEST(Lifecycle, FrozenLandmarkIsHeldExactly) {
  std::mt19937_64 rng(9);
  TotalState truth = random_total_state(6, rng);
  const Twist u{Vec3(0.01, 0, 0.02), Vec3(0.03, 0, 0)};
  ObserverState st = make_observer(random_total_state(6, rng), {});
  st = freeze(std::move(st), 4);
  const Vec3 held = reconstruct(st).landmarks[4];
  const LandmarkTransform factor = st.estimate.landmarks[4];
  for (int k = 0; k < 100; ++k) {
    MeasurementFrame frame = exact_frame(truth, u);
    frame.visible[4] = false;
    st = step(std::move(st), frame, 0.1);
    truth = propagate(truth, u, 0.1);
  }
  EXPECT_EQ(reconstruct(st).landmarks[4], held);
  EXPECT_EQ(st.estimate.landmarks[4].rotation, factor.rotation);
  EXPECT_EQ(st.estimate.landmarks[4].scale, factor.scale);
  EXPECT_THROW(freeze(st, 4), LifecycleError);

  st = unfreeze(std::move(st), 4);
  EXPECT_LT((reconstruct(st).landmarks[4] - held).norm(), 1e-10);
  EXPECT_THROW(unfreeze(st, 4), LifecycleError);
}

TEST(Lifecycle, FreezingEverythingLeavesPoseTermDegenerate) {
  std::mt19937_64 rng(10);
  const TotalState truth = random_total_state(3, rng);
  ObserverState st = make_observer(truth, {});
  for (std::size_t i = 0; i < 3; ++i) st = freeze(std::move(st), i);
  const Innovation inn = innovation(st, exact_frame(truth, Twist{}));
  EXPECT_TRUE(inn.degenerate);
}

TEST(Lyapunov, ZeroAtTruthAndNaNWhenUnmeasured) {
  std::mt19937_64 rng(11);
  const TotalState truth = random_total_state(3, rng);
  ObserverState st = observer_at_truth(truth, random_group_element(3, rng));
  MeasurementFrame frame = exact_frame(truth, Twist{});
  frame.visible[2] = false;
  st = freeze(std::move(st), 2);
  const LyapunovSample l = lyapunov(st, frame);
  EXPECT_LT(l.bearing[0] + l.depth[0] + l.bearing[1] + l.depth[1], 1e-24);
  EXPECT_TRUE(std::isnan(l.bearing[2]));
  EXPECT_LT(l.total(), 1e-24);
}

TEST(Antipode, ExactAntipodeIsStationary) {
  const AntipodalProbe probe = antipodal_probe(0.0, 100, 0.1, {.bearing = 1.0, .scale = 1.0, .pose = 1.0});
  EXPECT_NEAR(probe.initial_distance, 2.0, 1e-12);
  EXPECT_LT(probe.max_drift, 1e-6);
}

TEST(Antipode, PerturbedAntipodeEscapesAndConverges) {
  const AntipodalProbe probe = antipodal_probe(1e-6, 400, 0.1, {.bearing = 1.0, .scale = 1.0, .pose = 1.0});
  EXPECT_GT(probe.initial_distance, 2.0 - 1e-9);
  EXPECT_LT(probe.final_distance, 1e-6);
}

#include "test_support.hpp"
#include "vslam/checks.hpp"
#include "vslam/system.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace vslam;
using test::max_abs_diff;

TEST(Measure, AxisLandmark) {
  const Output yz = measure(TotalState{Pose::identity(), {Vec3(0, 0, 2)}});
  EXPECT_EQ(yz[0].direction, Vec3::UnitZ());
  EXPECT_EQ(yz[0].inverse_depth, 0.5);
}

TEST(Measure, BodyFrameUnderTranslatedPose) {
  const Pose p{Mat3::Identity(), Vec3(1, 0, 0)};
  const Bearing b = measure_landmark(p, Vec3(1, 0, 4));
  EXPECT_LT((b.direction - Vec3::UnitZ()).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(b.inverse_depth, 0.25);
}

TEST(Measure, ReconstructsLandmarkAndRejectsCoincidence) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const TotalState xi = random_total_state(4, rng);
    const Output yz = measure(xi);
    for (std::size_t i = 0; i < 4; ++i) {
      const Vec3 body = yz[i].direction / yz[i].inverse_depth;
      EXPECT_LT((xi.pose.rotation * body + xi.pose.translation - xi.landmarks[i]).norm(), 1e-12);
    }
  }
  EXPECT_THROW(measure(TotalState{Pose::identity(), {Vec3::Zero()}}), DegenerateConfiguration);
}

TEST(Propagate, ClosesTheCircleAfterOnePeriod) {
  const Twist u{Vec3(0, 0, 0.02 * std::numbers::pi), Vec3(0.1, 0, 0)};
  TotalState xi{Pose::identity(), {Vec3(1, 1, 1)}};
  for (int k = 0; k < 200; ++k) xi = propagate(xi, u, 0.5);
  EXPECT_LT(max_abs_diff(xi.pose.homogeneous(), Mat4::Identity()), 1e-6);
  EXPECT_EQ(xi.landmarks[0], Vec3(1, 1, 1));
}

TEST(Propagate, RequiresPositiveStep) {
  EXPECT_THROW(propagate(TotalState{Pose::identity(), {}}, Twist{}, 0.0), PreconditionError);
}

TEST(TangentBasis, OrthonormalAndTangent) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 200; ++k) {
    const Vec3 y = random_rotation(rng) * Vec3::UnitX();
    const Eigen::Matrix<double, 3, 2> b = tangent_basis(y);
    EXPECT_LT(max_abs_diff(b.transpose() * b, Eigen::Matrix2d::Identity()), 1e-12);
    EXPECT_LT((y.transpose() * b).norm(), 1e-12);
  }
}

TEST(SystemParams, Validation) {
  SystemParams p;
  EXPECT_NO_THROW(p.validate());
  EXPECT_TRUE(p.noise_free());
  p.var_bearing = -1.0;
  EXPECT_THROW(p.validate(), PreconditionError);
  p.var_bearing = 0.1;
  EXPECT_FALSE(p.noise_free());
  p.sensor_range = 0.0;
  EXPECT_THROW(p.validate(), PreconditionError);
  p.sensor_range = 1.0;
  p.landmark_count = 0;
  EXPECT_THROW(p.validate(), PreconditionError);
}

TEST(Sensor, RangeLimitsVisibility) {
  SystemParams p;
  p.landmark_count = 2;
  p.sensor_range = 1.0;
  Sensor sensor(p);
  const TotalState xi{Pose::identity(), {Vec3(0, 0, 1.5), Vec3(0, 0, 0.5)}};
  const MeasurementFrame f = sensor.sense(xi, Twist{}, 0.0);
  EXPECT_FALSE(f.visible[0]);
  EXPECT_TRUE(f.visible[1]);
  EXPECT_EQ(f.visible_count(), 1u);
  EXPECT_TRUE(std::isnan(f.output[0].inverse_depth));
  EXPECT_TRUE(f.velocity.flow[0].array().isNaN().all());
}

TEST(Sensor, NoiseFreeFrameIsExact) {
  std::mt19937_64 rng(3);
  const TotalState xi = random_total_state(6, rng);
  const Twist u = random_twist(rng);
  SystemParams p;
  p.landmark_count = 6;
  Sensor sensor(p);
  const MeasurementFrame f = sensor.sense(xi, u, 0.0);
  const Output truth = measure(xi);
  const std::vector<Vec3> flow = predicted_flow(truth, u);
  EXPECT_EQ(f.velocity.velocity.vector(), u.vector());
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(f.output[i].direction, truth[i].direction);
    EXPECT_EQ(f.output[i].inverse_depth, truth[i].inverse_depth);
    EXPECT_EQ(f.velocity.flow[i], flow[i]);
  }
}

TEST(Sensor, SameSeedSameStream) {
  std::mt19937_64 rng(4);
  const TotalState xi = random_total_state(5, rng);
  SystemParams p;
  p.landmark_count = 5;
  p.var_bearing = p.var_flow = p.var_linear = p.var_angular = p.var_inv_depth = 0.1;
  p.seed = 42;
  Sensor a(p), b(p);
  for (int k = 0; k < 10; ++k) {
    const MeasurementFrame fa = a.sense(xi, Twist{}, k), fb = b.sense(xi, Twist{}, k);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(fa.output[i].direction, fb.output[i].direction);
      EXPECT_EQ(fa.output[i].inverse_depth, fb.output[i].inverse_depth);
      EXPECT_NEAR(fa.output[i].direction.norm(), 1.0, 1e-15);
      EXPECT_LT(std::abs(fa.velocity.flow[i].dot(fa.output[i].direction)), 1e-12);
    }
  }
  Sensor fresh(p);
  p.seed = 43;
  Sensor other(p);
  EXPECT_NE(fresh.sense(xi, Twist{}, 0).output[0].inverse_depth, other.sense(xi, Twist{}, 0).output[0].inverse_depth);
}

TEST(Sensor, InverseDepthClampIsCounted) {
  SystemParams p;
  p.landmark_count = 1;
  p.var_inv_depth = 100.0;
  p.seed = 5;
  Sensor sensor(p);
  const TotalState xi{Pose::identity(), {Vec3(0, 0, 10)}};
  std::size_t low = 0;
  for (int k = 0; k < 1000; ++k) {
    const double z = sensor.sense(xi, Twist{}, k).output[0].inverse_depth;
    EXPECT_GE(z, tol::kMinInverseDepth);
    if (z == tol::kMinInverseDepth) ++low;
  }
  EXPECT_EQ(sensor.clamp_events(), low);
  EXPECT_GT(low, 400u);
}

TEST(Sensor, FiniteDifferenceFlowConvergesAtFirstOrder) {
  std::mt19937_64 rng(6);
  const TotalState start = random_total_state(4, rng);
  const Twist u = random_twist(rng);
  SystemParams p;
  p.landmark_count = 4;
  p.flow_mode = FlowMode::finite_difference;
  const auto error = [&](double dt) {
    Sensor sensor(p);
    const MeasurementFrame first = sensor.sense(start, u, 0.0);
    const TotalState next = propagate(start, u, dt);
    const MeasurementFrame second = sensor.sense(next, u, dt, &first);
    const std::vector<Vec3> exact = predicted_flow(measure(next), u);
    double e = 0.0;
    for (std::size_t i = 0; i < 4; ++i) e = std::max(e, (second.velocity.flow[i] - exact[i]).norm());
    return e;
  };
  const double e1 = error(0.5), e2 = error(0.05), e3 = error(0.005);
  EXPECT_LT(e2, e1);
  EXPECT_NEAR(e2 / e3, 10.0, 1.0);
}

TEST(Sensor, FiniteDifferenceFallsBackWithoutPrevious) {
  std::mt19937_64 rng(7);
  const TotalState xi = random_total_state(3, rng);
  const Twist u = random_twist(rng);
  SystemParams p;
  p.landmark_count = 3;
  p.flow_mode = FlowMode::finite_difference;
  Sensor sensor(p);
  const MeasurementFrame f = sensor.sense(xi, u, 0.0);
  const std::vector<Vec3> exact = predicted_flow(measure(xi), u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT((f.velocity.flow[i] - exact[i]).norm(), 1e-15);
}

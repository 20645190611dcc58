#include "vslam/system.hpp"

#include <algorithm>
#include <cmath>

namespace vslam {

void SystemParams::validate() const {
  if (landmark_count < 1) throw PreconditionError("SystemParams: need at least one landmark");
  if (!(sensor_range > 0.0)) throw PreconditionError("SystemParams: sensor range must be positive");
  for (double v : {var_linear, var_angular, var_flow, var_bearing, var_inv_depth}) {
    if (!(v >= 0.0)) throw PreconditionError("SystemParams: variances must be non-negative");
  }
}

bool SystemParams::noise_free() const {
  return var_linear == 0.0 && var_angular == 0.0 && var_flow == 0.0 && var_bearing == 0.0 &&
         var_inv_depth == 0.0;
}

std::size_t MeasurementFrame::visible_count() const {
  return static_cast<std::size_t>(std::count(visible.begin(), visible.end(), true));
}

Bearing measure_landmark(const Pose& pose, const Vec3& landmark) {
  const Vec3 rel = landmark - pose.translation;
  const double dist = rel.norm();
  if (dist < tol::kSeparation) throw DegenerateConfiguration("measure: landmark coincides with the camera");
  return {pose.rotation.transpose() * rel / dist, 1.0 / dist};
}

Output measure(const TotalState& xi) {
  Output out(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) out[i] = measure_landmark(xi.pose, xi.landmarks[i]);
  return out;
}

TotalState propagate(const TotalState& xi, const Twist& u, double dt) {
  if (!(dt > 0.0)) throw PreconditionError("propagate: dt must be positive");
  return {xi.pose * se3_exp(u, dt), xi.landmarks};
}

Eigen::Matrix<double, 3, 2> tangent_basis(const Vec3& y) {
  Eigen::Matrix<double, 3, 2> b;
  b.col(0) = y.unitOrthogonal();
  b.col(1) = y.cross(b.col(0));
  return b;
}

Sensor::Sensor(SystemParams params) : params_(params), rng_(params.seed) { params_.validate(); }

double Sensor::gaussian(double variance) {
  if (variance == 0.0) return 0.0;
  return std::sqrt(variance) * normal_(rng_);
}

MeasurementFrame Sensor::sense(const TotalState& xi, const Twist& u, double t, const MeasurementFrame* previous) {
  const std::size_t n = xi.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MeasurementFrame frame;
  frame.time = t;
  frame.visible.assign(n, false);
  frame.output.assign(n, Bearing{Vec3::Constant(nan), nan});
  frame.velocity.flow.assign(n, Vec3::Constant(nan));

  Twist noisy_u = u;
  for (int k = 0; k < 3; ++k) noisy_u.angular[k] += gaussian(params_.var_angular);
  for (int k = 0; k < 3; ++k) noisy_u.linear[k] += gaussian(params_.var_linear);
  frame.velocity.velocity = noisy_u;

  const bool finite_difference = params_.flow_mode == FlowMode::finite_difference;
  for (std::size_t i = 0; i < n; ++i) {
    const Bearing truth = measure_landmark(xi.pose, xi.landmarks[i]);
    if (1.0 / truth.inverse_depth > params_.sensor_range) continue;
    frame.visible[i] = true;

    Bearing meas = truth;
    if (params_.var_bearing > 0.0) {
      const Eigen::Vector2d n2(gaussian(params_.var_bearing), gaussian(params_.var_bearing));
      meas.direction = (truth.direction + tangent_basis(truth.direction) * n2).normalized();
    }
    if (params_.var_inv_depth > 0.0) {
      meas.inverse_depth = truth.inverse_depth + gaussian(params_.var_inv_depth);
      if (meas.inverse_depth < tol::kMinInverseDepth) {
        meas.inverse_depth = tol::kMinInverseDepth;
        ++clamp_events_;
      }
    }
    frame.output[i] = meas;

    const bool have_previous = finite_difference && previous != nullptr && i < previous->visible.size() &&
                               previous->visible[i] && t > previous->time;
    Vec3 phi;
    if (have_previous) {
      phi = (meas.direction - previous->output[i].direction) / (t - previous->time);
    } else if (finite_difference) {
      phi = predicted_flow({meas}, noisy_u)[0];
    } else {
      phi = predicted_flow({truth}, u)[0];
      if (params_.var_flow > 0.0) {
        const Eigen::Vector2d n2(gaussian(params_.var_flow), gaussian(params_.var_flow));
        phi += tangent_basis(truth.direction) * n2;
      }
    }
    if (have_previous || params_.var_bearing > 0.0 || params_.var_flow > 0.0) {
      phi -= meas.direction * meas.direction.dot(phi);
    }
    frame.velocity.flow[i] = phi;
  }
  return frame;
}

}  // namespace vslam

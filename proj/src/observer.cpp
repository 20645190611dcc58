#include "vslam/observer.hpp"

#include <cmath>
#include <limits>

namespace vslam {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_index(const ObserverState& st, std::size_t i, const char* where) {
  if (i >= st.size()) throw StructuralError(std::string(where) + ": landmark index out of range");
}

void require_frame(const ObserverState& st, const MeasurementFrame& frame) {
  if (frame.visible.size() != st.size() || frame.output.size() != st.size() ||
      frame.velocity.flow.size() != st.size()) {
    throw StructuralError("observer: frame landmark count does not match the observer");
  }
}

// Body-frame coordinates of the estimate of landmark i under the current pose estimate.
Vec3 estimated_body_point(const ObserverState& st, std::size_t i) {
  if (st.status[i] == LandmarkStatus::frozen) {
    const Pose pose = st.reference_pose * st.estimate.pose;
    return pose.rotation.transpose() * (st.frozen_position[i] - pose.translation);
  }
  const auto& [q, a] = st.estimate.landmarks[i];
  const Bearing& ref = st.reference_output[i];
  return q.transpose() * ref.direction / (a * ref.inverse_depth);
}

struct LandmarkTerms {
  Vec3 bearing = Vec3::Zero();
  double scale = 0.0;
  Mat6 gram = Mat6::Zero();
  Vec6 rhs = Vec6::Zero();
};

// Innovation contributions of one active, visible landmark.
LandmarkTerms landmark_terms(const ObserverState& st, std::size_t i, const MeasurementFrame& frame) {
  const auto& [q, a] = st.estimate.landmarks[i];
  const Bearing& ref = st.reference_output[i];
  const Bearing& meas = frame.output[i];
  const Vec3& phi = frame.velocity.flow[i];

  const Vec3 e_y = q * meas.direction;
  const double e_z = meas.inverse_depth / a;

  LandmarkTerms t;
  t.bearing = -st.gains.bearing * e_y.cross(ref.direction);
  t.scale = -st.gains.scale * (e_z - ref.inverse_depth) / std::max(e_z, tol::kMinInverseDepth);

  const Vec3 y_hat = (q.transpose() * ref.direction).normalized();
  const double z_hat = a * ref.inverse_depth;
  const Mat3 proj = Mat3::Identity() - y_hat * y_hat.transpose();
  const Mat3 y_cross = skew(y_hat);
  t.gram.topLeftCorner<3, 3>() = proj;
  t.gram.topRightCorner<3, 3>() = z_hat * y_cross;
  t.gram.bottomLeftCorner<3, 3>() = -z_hat * y_cross;
  t.gram.bottomRightCorner<3, 3>() = z_hat * z_hat * proj;
  t.rhs.head<3>() = -y_cross * phi;
  t.rhs.tail<3>() = -z_hat * phi;
  return t;
}

// Factor exp(-Delta_a dt) with Delta_a dt taken from the exact solution of
// de_z/dt = -k_a (e_z - z0) over the step. Agrees with the explicit step to
// first order in dt but never carries e_z past z0.
double scale_correction(const ObserverState& st, std::size_t i, const Bearing& measured, double dt) {
  const double target = st.reference_output[i].inverse_depth;
  const double e_z = std::max(measured.inverse_depth / st.estimate.landmarks[i].scale, tol::kMinInverseDepth);
  const double next = target + (e_z - target) * std::exp(-st.gains.scale * dt);
  return e_z / next;
}

Innovation compute_innovation(const ObserverState& st, const MeasurementFrame& frame) {
  require_frame(st, frame);
  const std::size_t n = st.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (st.status[i] == LandmarkStatus::active && !frame.visible[i]) {
      throw LifecycleError("innovation: active landmark " + std::to_string(i) + " is not visible; freeze it first");
    }
  }

  Innovation inn;
  inn.bearing.assign(n, Vec3::Zero());
  inn.scale.assign(n, 0.0);
  std::vector<LandmarkTerms> terms(n);
  const bool parallel = st.options.execution == Execution::parallel;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (st.status[i] != LandmarkStatus::active) continue;
    terms[i] = landmark_terms(st, i, frame);
    inn.bearing[i] = terms[i].bearing;
    inn.scale[i] = terms[i].scale;
  }

  // Summed in index order so the serial and parallel paths agree bit for bit.
  Mat6 gram = Mat6::Zero();
  Vec6 rhs = Vec6::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    if (st.status[i] != LandmarkStatus::active) continue;
    gram += terms[i].gram;
    rhs += terms[i].rhs;
  }

  const Eigen::SelfAdjointEigenSolver<Mat6> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(5);
  inn.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(inn.condition <= tol::kMaxCondition)) {
    inn.degenerate = true;
    return inn;
  }
  const Vec6 fitted = gram.ldlt().solve(rhs);
  const Vec6 residual = fitted - frame.velocity.velocity.vector();
  const Pose pose_hat = st.estimate.pose;
  inn.pose = Twist::from_vector(-st.gains.pose * (adjoint(pose_hat) * residual));
  return inn;
}

}  // namespace

void ObserverGains::validate() const {
  if (!(bearing > 0.0) || !(scale > 0.0) || !(pose > 0.0)) {
    throw PreconditionError("observer gains must be positive");
  }
}

ObserverState make_observer(const TotalState& reference, ObserverGains gains, ObserverOptions options) {
  gains.validate();
  const std::size_t n = reference.size();
  ObserverState st;
  st.estimate = GroupElement::identity(n);
  st.reference_pose = reference.pose;
  st.reference_landmarks = reference.landmarks;
  st.reference_output = measure(reference);
  st.status.assign(n, LandmarkStatus::active);
  st.frozen_position.assign(n, Vec3::Constant(kNaN));
  st.gains = gains;
  st.options = options;
  return st;
}

ObserverState make_observer(std::size_t n, const Pose& reference_pose, ObserverGains gains,
                            ObserverOptions options) {
  gains.validate();
  ObserverState st;
  st.estimate = GroupElement::identity(n);
  st.reference_pose = reference_pose;
  st.reference_landmarks.assign(n, Vec3::Constant(kNaN));
  st.reference_output.assign(n, Bearing{Vec3::Constant(kNaN), kNaN});
  st.status.assign(n, LandmarkStatus::uninitialized);
  st.frozen_position.assign(n, Vec3::Constant(kNaN));
  st.gains = gains;
  st.options = options;
  return st;
}

Bearing estimated_output(const ObserverState& st, std::size_t i) {
  require_index(st, i, "estimated_output");
  if (st.status[i] == LandmarkStatus::uninitialized) {
    throw LifecycleError("estimated_output: landmark " + std::to_string(i) + " is uninitialized");
  }
  if (st.status[i] == LandmarkStatus::frozen) {
    const Vec3 body = estimated_body_point(st, i);
    return {body.normalized(), 1.0 / body.norm()};
  }
  const auto& [q, a] = st.estimate.landmarks[i];
  const Bearing& ref = st.reference_output[i];
  return {(q.transpose() * ref.direction).normalized(), a * ref.inverse_depth};
}

Output estimated_output(const ObserverState& st) {
  Output out(st.size());
  for (std::size_t i = 0; i < st.size(); ++i) out[i] = estimated_output(st, i);
  return out;
}

Bearing output_error(const ObserverState& st, std::size_t i, const Bearing& measured) {
  require_index(st, i, "output_error");
  const auto& [q, a] = st.estimate.landmarks[i];
  return {(q * measured.direction).normalized(), measured.inverse_depth / a};
}

Output output_error(const ObserverState& st, const Output& yz) {
  if (yz.size() != st.size()) throw StructuralError("output_error: landmark count mismatch");
  return output_action(group_inverse(st.estimate), yz);
}

Innovation innovation(const ObserverState& st, const MeasurementFrame& frame) {
  return compute_innovation(st, frame);
}

ObserverState step(ObserverState st, const MeasurementFrame& frame, double dt) {
  Innovation unused;
  return step(std::move(st), frame, dt, unused);
}

ObserverState step(ObserverState st, const MeasurementFrame& frame, double dt, Innovation& applied) {
  if (!(dt > 0.0)) throw PreconditionError("step: dt must be positive");
  applied = compute_innovation(st, frame);
  const Twist& u = frame.velocity.velocity;
  const std::size_t n = st.size();
  const bool parallel = st.options.execution == Execution::parallel;

  if (st.options.integrator == Integrator::geometric) {
    st.estimate.pose = se3_exp(-applied.pose, dt) * st.estimate.pose * se3_exp(u, dt);
    const Pose motion_inverse = se3_exp(u, dt).inverse();
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
      const auto i = static_cast<std::size_t>(k);
      if (st.status[i] != LandmarkStatus::active) continue;
      const LandmarkVelocity lam =
          interval_lift_landmark(frame.output[i], frame.velocity.flow[i], u, dt, motion_inverse);
      auto& [q, a] = st.estimate.landmarks[i];
      q = so3_exp(-applied.bearing[i], dt) * q * so3_exp(lam.angular, dt);
      a = scale_correction(st, i, frame.output[i], dt) * a * std::exp(lam.rate * dt);
    }
  } else {
    // Additive Euler on the matrix entries, projected back onto the group.
    const Mat4 a_mat = st.estimate.pose.homogeneous();
    Mat4 next = a_mat + dt * (a_mat * u.wedge() - applied.pose.wedge() * a_mat);
    Pose pose = Pose::from_homogeneous(next);
    pose.rotation = orthonormalize(pose.rotation);
    st.estimate.pose = pose;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
      const auto i = static_cast<std::size_t>(k);
      if (st.status[i] != LandmarkStatus::active) continue;
      const LandmarkVelocity lam = lift_landmark(frame.output[i], frame.velocity.flow[i], u);
      auto& [q, a] = st.estimate.landmarks[i];
      q = orthonormalize(q + dt * (q * skew(lam.angular) - skew(applied.bearing[i]) * q));
      const double scaled = a + dt * (a * lam.rate - applied.scale[i] * a);
      // Euler can overshoot through zero; keep the scale on MR.
      a = scaled > 0.0 ? scaled : a * tol::kMinInverseDepth;
    }
  }
  return st;
}

ObserverState initialize_landmark(ObserverState st, std::size_t i, const MeasurementFrame& frame) {
  require_index(st, i, "initialize_landmark");
  require_frame(st, frame);
  if (st.status[i] != LandmarkStatus::uninitialized) {
    throw LifecycleError("initialize_landmark: landmark " + std::to_string(i) + " already initialized");
  }
  if (!frame.visible[i]) {
    throw LifecycleError("initialize_landmark: landmark " + std::to_string(i) + " is not visible");
  }
  // The reference point is placed so that Upsilon(X^, reference) puts the
  // landmark at x_P^ + R_P^ (y / z) with identity landmark factors.
  const Bearing& meas = frame.output[i];
  st.reference_landmarks[i] = st.reference_pose.transform(meas.direction / meas.inverse_depth);
  st.reference_output[i] = measure_landmark(st.reference_pose, st.reference_landmarks[i]);
  st.estimate.landmarks[i] = LandmarkTransform{};
  st.status[i] = LandmarkStatus::active;
  return st;
}

ObserverState freeze(ObserverState st, std::size_t i) {
  require_index(st, i, "freeze");
  if (st.status[i] != LandmarkStatus::active) {
    throw LifecycleError("freeze: landmark " + std::to_string(i) + " is not active");
  }
  const Pose pose = st.reference_pose * st.estimate.pose;
  st.frozen_position[i] = pose.transform(estimated_body_point(st, i));
  st.status[i] = LandmarkStatus::frozen;
  return st;
}

ObserverState unfreeze(ObserverState st, std::size_t i) {
  require_index(st, i, "unfreeze");
  if (st.status[i] != LandmarkStatus::frozen) {
    throw LifecycleError("unfreeze: landmark " + std::to_string(i) + " is not frozen");
  }
  // Re-solve (Q_i, a_i) so the held inertial position is reproduced under the
  // current pose estimate.
  const Vec3 body = estimated_body_point(st, i);
  const double dist = body.norm();
  if (dist < tol::kSeparation) throw DegenerateConfiguration("unfreeze: held landmark coincides with the camera");
  const Bearing& ref = st.reference_output[i];
  st.estimate.landmarks[i] = {rotation_between(body / dist, ref.direction), 1.0 / (ref.inverse_depth * dist)};
  st.frozen_position[i] = Vec3::Constant(kNaN);
  st.status[i] = LandmarkStatus::active;
  return st;
}

TotalState reconstruct(const ObserverState& st) {
  TotalState out;
  out.pose = st.reference_pose * st.estimate.pose;
  out.landmarks.resize(st.size());
  for (std::size_t i = 0; i < st.size(); ++i) {
    switch (st.status[i]) {
      case LandmarkStatus::uninitialized:
        out.landmarks[i] = Vec3::Constant(kNaN);
        break;
      case LandmarkStatus::frozen:
        out.landmarks[i] = st.frozen_position[i];
        break;
      case LandmarkStatus::active:
        out.landmarks[i] = out.pose.transform(estimated_body_point(st, i));
        break;
    }
  }
  return out;
}

double LyapunovSample::total() const {
  double sum = 0.0;
  for (double v : bearing) {
    if (!std::isnan(v)) sum += v;
  }
  for (double v : depth) {
    if (!std::isnan(v)) sum += v;
  }
  return sum;
}

LyapunovSample lyapunov(const ObserverState& st, const MeasurementFrame& frame) {
  require_frame(st, frame);
  LyapunovSample out;
  out.bearing.assign(st.size(), kNaN);
  out.depth.assign(st.size(), kNaN);
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st.status[i] != LandmarkStatus::active || !frame.visible[i]) continue;
    const Bearing e = output_error(st, i, frame.output[i]);
    const Bearing& ref = st.reference_output[i];
    out.bearing[i] = 0.5 * (e.direction - ref.direction).squaredNorm();
    const double dz = e.inverse_depth - ref.inverse_depth;
    out.depth[i] = 0.5 * dz * dz;
  }
  return out;
}

}  // namespace vslam

namespace vslam {

AntipodalProbe antipodal_probe(double perturbation, std::size_t steps, double dt, ObserverGains gains) {
  const TotalState truth{Pose::identity(), {Vec3(0, 0, 2)}};
  ObserverState st = make_observer(truth, gains);
  const Vec3 y_ref = st.reference_output[0].direction;
  const Vec3 start = (-y_ref + perturbation * tangent_basis(y_ref).col(0)).normalized();
  const Vec3 y = measure(truth)[0].direction;
  st.estimate.landmarks[0].rotation = rotation_between(y, start);

  SystemParams params;
  params.landmark_count = 1;
  Sensor sensor(params);
  const MeasurementFrame frame = sensor.sense(truth, Twist{}, 0.0);
  const Vec3 e0 = output_error(st, 0, frame.output[0]).direction;

  AntipodalProbe probe;
  probe.initial_distance = (e0 - y_ref).norm();
  for (std::size_t k = 0; k < steps; ++k) {
    st = step(std::move(st), frame, dt);
    probe.max_drift = std::max(probe.max_drift, (output_error(st, 0, frame.output[0]).direction - e0).norm());
  }
  probe.final_distance = (output_error(st, 0, frame.output[0]).direction - y_ref).norm();
  return probe;
}

}  // namespace vslam

#include "vslam/group.hpp"

#include <cmath>

namespace vslam {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* where) {
  if (a != b) {
    throw StructuralError(std::string(where) + ": landmark count mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

bool GroupElement::valid(double tolerance) const {
  if (!is_rotation(pose.rotation, tolerance)) return false;
  for (const auto& l : landmarks) {
    if (!(l.scale > 0.0) || !std::isfinite(l.scale) || !is_rotation(l.rotation, tolerance)) return false;
  }
  return true;
}

GroupElement group_compose(const GroupElement& x1, const GroupElement& x2) {
  require_same_size(x1.size(), x2.size(), "group_compose");
  GroupElement out;
  out.pose = x1.pose * x2.pose;
  out.landmarks.resize(x1.size());
  for (std::size_t i = 0; i < x1.size(); ++i) {
    out.landmarks[i] = {x1.landmarks[i].rotation * x2.landmarks[i].rotation,
                        x1.landmarks[i].scale * x2.landmarks[i].scale};
  }
  return out;
}

GroupElement group_inverse(const GroupElement& x) {
  GroupElement out;
  out.pose = x.pose.inverse();
  out.landmarks.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.landmarks[i] = {x.landmarks[i].rotation.transpose(), 1.0 / x.landmarks[i].scale};
  }
  return out;
}

GroupElement group_exp(const AlgebraElement& lambda, double dt) {
  GroupElement out;
  out.pose = se3_exp(lambda.pose, dt);
  out.landmarks.resize(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    out.landmarks[i] = {so3_exp(lambda.landmarks[i].angular, dt), std::exp(lambda.landmarks[i].rate * dt)};
  }
  return out;
}

TotalState state_action(const GroupElement& x, const TotalState& xi) {
  require_same_size(x.size(), xi.size(), "state_action");
  TotalState out;
  out.pose = xi.pose * x.pose;
  out.landmarks.resize(xi.size());
  const Mat3& rp = xi.pose.rotation;
  const Vec3& xp = xi.pose.translation;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const Vec3 rel = xi.landmarks[i] - xp;
    if (rel.norm() < tol::kSeparation) {
      throw DegenerateConfiguration("state_action: landmark " + std::to_string(i) + " coincides with the camera");
    }
    const auto& [q, a] = x.landmarks[i];
    const Vec3 body = q.transpose() * (rp.transpose() * rel) / a;
    out.landmarks[i] = out.pose.rotation * body + out.pose.translation;
    if (body.norm() < tol::kSeparation) {
      throw DegenerateConfiguration("state_action: result landmark " + std::to_string(i) +
                                    " coincides with the camera");
    }
  }
  return out;
}

Output output_action(const GroupElement& x, const Output& yz) {
  require_same_size(x.size(), yz.size(), "output_action");
  Output out(yz.size());
  for (std::size_t i = 0; i < yz.size(); ++i) {
    const auto& [q, a] = x.landmarks[i];
    out[i].direction = (q.transpose() * yz[i].direction).normalized();
    out[i].inverse_depth = a * yz[i].inverse_depth;
  }
  return out;
}

Vec3 tangent_flow(const Vec3& y, const Vec3& phi) {
  const double defect = std::abs(y.dot(phi));
  if (defect <= tol::kTangency) return phi;
  if (defect <= tol::kTangencyRepair) return phi - y * y.dot(phi);
  throw PreconditionError("flow is not tangent to the bearing (|y.phi| = " + std::to_string(defect) + ")");
}

LandmarkVelocity lift_landmark(const Bearing& yz, const Vec3& flow, const Twist& u) {
  const Vec3& y = yz.direction;
  const Vec3 phi = tangent_flow(y, flow);
  return {phi.cross(y), yz.inverse_depth * y.dot(u.linear)};
}

LandmarkVelocity interval_lift_landmark(const Bearing& yz, const Vec3& flow, const Twist& u, double dt,
                                        const Pose& motion_inverse) {
  const Vec3& y = yz.direction;
  const double z = yz.inverse_depth;
  const Vec3 phi = tangent_flow(y, flow);
  const Vec3 next = motion_inverse.transform(y / z);
  const double dist = next.norm();
  // Transport undefined when the camera reaches the landmark; use the first-order lift.
  if (dist < tol::kSeparation) return {phi.cross(y), z * y.dot(u.linear)};
  const Vec3 y_next = next / dist;
  const Vec3 model_flow = -u.angular.cross(y) - z * (u.linear - y * y.dot(u.linear));
  // Exact transport y_next -> y, with its first-order term swapped for the measured flow.
  const Vec3 transport = so3_log(rotation_between(y_next, y)) / dt;
  return {transport + (phi - model_flow).cross(y), std::log(1.0 / (dist * z)) / dt};
}

AlgebraElement lift(const Output& yz, const VelocityMeasurement& vel) {
  require_same_size(yz.size(), vel.flow.size(), "lift");
  AlgebraElement out{vel.velocity, std::vector<LandmarkVelocity>(yz.size())};
  for (std::size_t i = 0; i < yz.size(); ++i) out.landmarks[i] = lift_landmark(yz[i], vel.flow[i], vel.velocity);
  return out;
}

AlgebraElement interval_lift(const Output& yz, const VelocityMeasurement& vel, double dt) {
  if (!(dt > 0.0)) throw PreconditionError("interval_lift: dt must be positive");
  require_same_size(yz.size(), vel.flow.size(), "interval_lift");
  const Pose motion_inverse = se3_exp(vel.velocity, dt).inverse();
  AlgebraElement out{vel.velocity, std::vector<LandmarkVelocity>(yz.size())};
  for (std::size_t i = 0; i < yz.size(); ++i) {
    out.landmarks[i] = interval_lift_landmark(yz[i], vel.flow[i], vel.velocity, dt, motion_inverse);
  }
  return out;
}

std::vector<Vec3> predicted_flow(const Output& yz, const Twist& u) {
  std::vector<Vec3> flow(yz.size());
  for (std::size_t i = 0; i < yz.size(); ++i) {
    const Vec3& y = yz[i].direction;
    flow[i] = -u.angular.cross(y) - yz[i].inverse_depth * (u.linear - y * y.dot(u.linear));
  }
  return flow;
}

}  // namespace vslam

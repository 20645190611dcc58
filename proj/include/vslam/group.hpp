#pragma once

// The VSLAM_n(3) symmetry group SE(3) x (SO(3) x MR)^n, its Lie algebra, the
// right actions on configurations and outputs, and the velocity lift.

#include "vslam/lie.hpp"

#include <cstddef>
#include <vector>

namespace vslam {

namespace tol {
/// Minimum landmark-to-camera separation (metres) defining the reduced total space.
inline constexpr double kSeparation = 1e-6;
/// Flow tangency defect accepted as-is.
inline constexpr double kTangency = 1e-8;
/// Flow tangency defect that is silently re-projected; larger defects are rejected.
inline constexpr double kTangencyRepair = 1e-6;
}  // namespace tol

/// A landmark coincides with the camera centre (outside the reduced total space).
class DegenerateConfiguration : public std::runtime_error {
 public:
  explicit DegenerateConfiguration(const std::string& what) : std::runtime_error(what) {}
};

/// Operands disagree on the number of landmarks.
class StructuralError : public std::invalid_argument {
 public:
  explicit StructuralError(const std::string& what) : std::invalid_argument(what) {}
};

/// Per-landmark (Q, a) factor of a group element.
struct LandmarkTransform {
  Mat3 rotation = Mat3::Identity();
  double scale = 1.0;
};

struct GroupElement {
  Pose pose;
  std::vector<LandmarkTransform> landmarks;

  static GroupElement identity(std::size_t n) { return {Pose::identity(), std::vector<LandmarkTransform>(n)}; }
  std::size_t size() const { return landmarks.size(); }
  /// Every rotation is in SO(3) and every scale positive.
  bool valid(double tolerance = tol::kRotation) const;
};

/// Per-landmark (W, w) factor of an algebra element; W is the vee of an so(3) matrix.
struct LandmarkVelocity {
  Vec3 angular = Vec3::Zero();
  double rate = 0.0;
};

struct AlgebraElement {
  Twist pose;
  std::vector<LandmarkVelocity> landmarks;

  std::size_t size() const { return landmarks.size(); }
};

struct TotalState {
  Pose pose;
  std::vector<Vec3> landmarks;  // inertial frame, metres

  std::size_t size() const { return landmarks.size(); }
};

/// Bearing on S^2 (body frame) and inverse depth (1/m) of one landmark.
struct Bearing {
  Vec3 direction = Vec3::UnitZ();
  double inverse_depth = 1.0;
};

using Output = std::vector<Bearing>;

struct VelocityMeasurement {
  Twist velocity;
  std::vector<Vec3> flow;  // ambient R^3 coordinates, tangent at the matching bearing
};

GroupElement group_compose(const GroupElement& x1, const GroupElement& x2);
GroupElement group_inverse(const GroupElement& x);
/// Componentwise exponential of dt * lambda.
GroupElement group_exp(const AlgebraElement& lambda, double dt);

/// Upsilon: right action on configurations. Throws DegenerateConfiguration if
/// the input or the result leaves the reduced total space.
TotalState state_action(const GroupElement& x, const TotalState& xi);

/// rho: right action on outputs, (Q^T y, a z) per landmark.
Output output_action(const GroupElement& x, const Output& yz);

/// lambda: lift of measured velocities into the algebra,
/// (U, ((phi x y)^x, z y^T V)_i).
AlgebraElement lift(const Output& yz, const VelocityMeasurement& vel);

/// Lift integrated over one sample interval under a constant body velocity.
/// The first-order part is the measured-flow lift; the higher-order part is
/// the exact constant-velocity transport of each landmark, so that
/// group_exp(interval_lift(h(xi), vel, dt), dt) acting on xi reproduces the
/// configuration one interval later whenever the measurements are exact.
AlgebraElement interval_lift(const Output& yz, const VelocityMeasurement& vel, double dt);

/// Single-landmark forms of the lifts above. `motion_inverse` is
/// se3_exp(u, dt)^-1, shared by all landmarks of one interval.
LandmarkVelocity lift_landmark(const Bearing& yz, const Vec3& flow, const Twist& u);
LandmarkVelocity interval_lift_landmark(const Bearing& yz, const Vec3& flow, const Twist& u, double dt,
                                        const Pose& motion_inverse);

/// Flow of static landmarks: -Omega^x y - z (I - y y^T) V.
std::vector<Vec3> predicted_flow(const Output& yz, const Twist& u);

/// Returns phi re-projected onto the tangent plane at y if the tangency defect
/// is small; throws PreconditionError otherwise.
Vec3 tangent_flow(const Vec3& y, const Vec3& phi);

}  // namespace vslam

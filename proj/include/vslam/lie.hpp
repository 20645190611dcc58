#pragma once

// Matrix Lie-group primitives for SO(3), SE(3) and the multiplicative reals.
//
// Rotations are stored as 3x3 matrices. Twists are ordered (angular, linear)
// everywhere: 6-vectors, adjoint blocks and covariance blocks.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace vslam {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

namespace tol {
/// Orthogonality / determinant defect accepted for a rotation.
inline constexpr double kRotation = 1e-9;
/// Norm defect accepted for a unit bearing.
inline constexpr double kUnitNorm = 1e-9;
/// Below this angle the exponential maps switch to series expansions.
inline constexpr double kSmallAngle = 1e-8;
}  // namespace tol

/// Raised when an input violates a documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  explicit PreconditionError(const std::string& what) : std::invalid_argument(what) {}
};

/// skew(v) * w == v.cross(w)
Mat3 skew(const Vec3& v);
/// Inverse of skew; reads the antisymmetric part only.
Vec3 vee(const Mat3& m);

/// I - y y^T for a unit vector y. Throws PreconditionError for non-unit input.
Mat3 projector(const Vec3& y);

bool is_rotation(const Mat3& r, double tolerance = tol::kRotation);
/// Nearest rotation in the Frobenius sense (SVD polar projection).
Mat3 orthonormalize(const Mat3& r);

/// Minimal rotation R with R * from == to (both unit). The rotation axis is
/// from x to, so it has no component along either vector.
Mat3 rotation_between(const Vec3& from, const Vec3& to);

struct Twist {
  Vec3 angular = Vec3::Zero();  // rad/s
  Vec3 linear = Vec3::Zero();   // m/s

  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 vector() const {
    Vec6 out;
    out << angular, linear;
    return out;
  }
  /// 4x4 matrix (angular^x, linear; 0, 0).
  Mat4 wedge() const;
  static Twist vee(const Mat4& m);

  Twist operator*(double s) const { return {angular * s, linear * s}; }
  Twist operator+(const Twist& o) const { return {angular + o.angular, linear + o.linear}; }
  Twist operator-() const { return {-angular, -linear}; }
};

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_homogeneous(const Mat4& m);

  Mat4 homogeneous() const;
  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  /// Maps a point given in this frame into the parent frame.
  Vec3 transform(const Vec3& p) const { return rotation * p + translation; }
};

Pose pose_compose(const Pose& p, const Pose& a);
Pose pose_inverse(const Pose& p);

/// Rodrigues exponential of dt * skew(omega). The result is re-projected onto
/// SO(3) whenever the orthogonality defect exceeds the rotation tolerance.
Mat3 so3_exp(const Vec3& omega, double dt = 1.0);
/// Rotation vector of r, angle in [0, pi].
Vec3 so3_log(const Mat3& r);

/// Closed-form exponential of dt * U^ using the SO(3) left Jacobian.
Pose se3_exp(const Twist& u, double dt = 1.0);
Twist se3_log(const Pose& p);

/// Left Jacobian of SO(3) at phi.
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inverse(const Vec3& phi);

/// Ad_A with Ad_A * vee(U) == vee(A U^ A^-1).
Mat6 adjoint(const Pose& a);

}  // namespace vslam

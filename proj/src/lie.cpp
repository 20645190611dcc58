#include "vslam/lie.hpp"

#include <cmath>
#include <numbers>

namespace vslam {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) {
  return 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

Mat3 projector(const Vec3& y) {
  if (std::abs(y.norm() - 1.0) > tol::kUnitNorm) {
    throw PreconditionError("projector: input is not a unit vector (|y| = " +
                            std::to_string(y.norm()) + ")");
  }
  return Mat3::Identity() - y * y.transpose();
}

bool is_rotation(const Mat3& r, double tolerance) {
  const double ortho = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tolerance && std::abs(r.determinant() - 1.0) <= tolerance;
}

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  const Vec3 axis = from.cross(to);
  const double s = axis.norm();
  const double c = from.dot(to);
  if (s < 1e-15) {
    if (c > 0.0) return Mat3::Identity();
    // Antipodal: half turn about any axis orthogonal to `from`.
    Vec3 ortho = from.unitOrthogonal();
    return so3_exp(ortho * std::numbers::pi);
  }
  return so3_exp(axis * (std::atan2(s, c) / s));
}

Mat4 Twist::wedge() const {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = skew(angular);
  m.topRightCorner<3, 1>() = linear;
  return m;
}

Twist Twist::vee(const Mat4& m) {
  return {vslam::vee(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
}

Pose Pose::from_homogeneous(const Mat4& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Mat4 Pose::homogeneous() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

Pose Pose::operator*(const Pose& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

Pose pose_compose(const Pose& p, const Pose& a) { return p * a; }
Pose pose_inverse(const Pose& p) { return p.inverse(); }

Mat3 so3_exp(const Vec3& omega, double dt) {
  const Vec3 phi = omega * dt;
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  Mat3 r;
  if (theta < tol::kSmallAngle) {
    r = Mat3::Identity() + k + 0.5 * k * k;
  } else {
    r = Mat3::Identity() + (std::sin(theta) / theta) * k +
        ((1.0 - std::cos(theta)) / (theta * theta)) * k * k;
  }
  if (!is_rotation(r)) r = orthonormalize(r);
  return r;
}

Vec3 so3_log(const Mat3& r) {
  const double cos_theta = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Vec3 v = vee(r);  // sin(theta) * axis
  if (theta < tol::kSmallAngle) return v;
  if (std::numbers::pi - theta < 1e-6) {
    // Near a half turn sin(theta) vanishes; recover the axis from R + I.
    const Mat3 b = 0.5 * (r + Mat3::Identity());
    Eigen::Index k = 0;
    b.diagonal().maxCoeff(&k);
    Vec3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
    axis.normalize();
    if (axis.dot(v) < 0.0) axis = -axis;
    return axis * theta;
  }
  return v * (theta / std::sin(theta));
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < tol::kSmallAngle) return Mat3::Identity() + 0.5 * k + k * k / 6.0;
  const double t2 = theta * theta;
  return Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * k +
         ((theta - std::sin(theta)) / (t2 * theta)) * k * k;
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < tol::kSmallAngle) return Mat3::Identity() - 0.5 * k + k * k / 12.0;
  const double t2 = theta * theta;
  const double coeff = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * k + coeff * k * k;
}

Pose se3_exp(const Twist& u, double dt) {
  const Vec3 phi = u.angular * dt;
  return {so3_exp(phi), so3_left_jacobian(phi) * (u.linear * dt)};
}

Twist se3_log(const Pose& p) {
  const Vec3 phi = so3_log(p.rotation);
  return {phi, so3_left_jacobian_inverse(phi) * p.translation};
}

Mat6 adjoint(const Pose& a) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = a.rotation;
  ad.bottomRightCorner<3, 3>() = a.rotation;
  ad.bottomLeftCorner<3, 3>() = skew(a.translation) * a.rotation;
  return ad;
}

}  // namespace vslam

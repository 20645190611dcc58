#pragma once

// Ground-truth SLAM system: kinematics, the measurement map h and a seeded
// sensor simulator with Gaussian noise and a range-limited field of view.

#include "vslam/group.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <random>

namespace vslam {

namespace tol {
/// Floor applied to noisy inverse depths.
inline constexpr double kMinInverseDepth = 1e-4;
}  // namespace tol

enum class FlowMode { analytic, finite_difference };

/// Noise values are per-axis variances of isotropic zero-mean Gaussians.
struct SystemParams {
  std::size_t landmark_count = 10;
  double sensor_range = std::numeric_limits<double>::infinity();  // metres
  double var_linear = 0.0;     // (m/s)^2
  double var_angular = 0.0;    // (rad/s)^2
  double var_flow = 0.0;       // per tangent axis
  double var_bearing = 0.0;    // per tangent axis
  double var_inv_depth = 0.0;  // (1/m)^2
  FlowMode flow_mode = FlowMode::analytic;
  std::uint64_t seed = 0;

  /// Throws PreconditionError if any field is out of range.
  void validate() const;
  bool noise_free() const;
};

struct MeasurementFrame {
  double time = 0.0;
  std::vector<bool> visible;
  /// Invisible entries hold NaN and must not be read.
  Output output;
  /// Flow entries follow the same visibility rule.
  VelocityMeasurement velocity;

  std::size_t visible_count() const;
};

/// h: body-frame bearings and inverse depths. Throws DegenerateConfiguration
/// when a landmark is within the separation tolerance of the camera.
Output measure(const TotalState& xi);
Bearing measure_landmark(const Pose& pose, const Vec3& landmark);

/// Static-world kinematics: P <- P exp(dt U), landmarks unchanged.
TotalState propagate(const TotalState& xi, const Twist& u, double dt);

/// Orthonormal basis (3x2) of the tangent plane of S^2 at y.
Eigen::Matrix<double, 3, 2> tangent_basis(const Vec3& y);

/// Sensor simulator. Owns its random stream; not shareable between threads.
class Sensor {
 public:
  explicit Sensor(SystemParams params);

  /// Noisy measurement of `xi` under true velocity `u` at time `t`.
  /// `previous` is required for finite-difference flow; when absent, or when a
  /// landmark was not visible in it, that landmark's flow falls back to the
  /// flow model evaluated at the noisy measurements.
  MeasurementFrame sense(const TotalState& xi, const Twist& u, double t,
                         const MeasurementFrame* previous = nullptr);

  const SystemParams& params() const { return params_; }
  /// Number of inverse-depth samples that hit the positivity floor so far.
  std::size_t clamp_events() const { return clamp_events_; }

 private:
  double gaussian(double variance);

  SystemParams params_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::size_t clamp_events_ = 0;
};

}  // namespace vslam

#pragma once

// Extended Kalman filter on the raw pose-map state, used as a baseline.
//
// Error state: pose error xi in se(3) with P_true = P_est * exp(xi), ordered
// (angular, linear), followed by 3 inertial coordinates per initialized
// landmark in order of initialization. Covariance algebra is dense.

#include "vslam/observer.hpp"

#include <Eigen/Dense>

namespace vslam {

struct EkfNoise {
  double var_linear = 0.0;
  double var_angular = 0.0;
  double var_bearing = 0.0;
  double var_inv_depth = 0.0;

  static EkfNoise from(const SystemParams& p) {
    return {p.var_linear, p.var_angular, p.var_bearing, p.var_inv_depth};
  }
};

namespace tol {
/// Smallest eigenvalue given to a newly inserted landmark covariance block.
inline constexpr double kLandmarkCovarianceFloor = 1e-4;
/// Variance floor used for measurement noise when a run is noise-free.
inline constexpr double kMinMeasurementVariance = 1e-8;
}  // namespace tol

struct EkfState {
  TotalState mean;                     // uninitialized landmarks are NaN
  Eigen::MatrixXd covariance;          // (6 + 3m) square
  std::vector<LandmarkStatus> status;
  std::vector<int> slot;               // covariance block index, -1 if uninitialized
  Execution execution = Execution::serial;

  std::size_t size() const { return status.size(); }
  Eigen::Index dimension() const { return covariance.rows(); }
  Eigen::Index offset(std::size_t i) const { return 6 + 3 * slot[i]; }
};

struct EkfUpdateReport {
  std::size_t landmarks_used = 0;
  bool skipped = false;  // innovation covariance could not be factorized
};

EkfState make_ekf(std::size_t n, const Pose& initial_pose, const Mat6& pose_covariance = Mat6::Zero(),
                  Execution execution = Execution::serial);

/// Error-state transition of the pose block: Ad_{exp(dt U)^-1}.
Mat6 ekf_process_jacobian(const Twist& u, double dt);

EkfState ekf_predict(EkfState st, const Twist& u, double dt, const EkfNoise& noise);

/// Predicted (y, z) of landmark i and its 3 x dimension() Jacobian with
/// respect to the error state. Rows: tangent-plane bearing coordinates in the
/// basis tangent_basis(y), then inverse depth.
struct LandmarkPrediction {
  Bearing output;
  Eigen::Matrix<double, 3, 2> basis;
  Eigen::Matrix<double, 3, 6> pose_jacobian;
  Mat3 landmark_jacobian;
};
LandmarkPrediction ekf_predict_measurement(const EkfState& st, std::size_t i);

EkfState ekf_update(EkfState st, const MeasurementFrame& frame, const EkfNoise& noise);
EkfState ekf_update(EkfState st, const MeasurementFrame& frame, const EkfNoise& noise, EkfUpdateReport& report);

/// Landmark position from the current pose estimate and a measurement, with
/// the 3x6 pose and 3x3 measurement (two tangent coordinates, inverse depth)
/// insertion Jacobians.
struct LandmarkInsertion {
  Vec3 position;
  Eigen::Matrix<double, 3, 6> pose_jacobian;
  Mat3 measurement_jacobian;
};
LandmarkInsertion ekf_insertion(const Pose& pose, const Bearing& measured);

EkfState ekf_init_landmark(EkfState st, std::size_t i, const MeasurementFrame& frame, const EkfNoise& noise);
EkfState ekf_freeze(EkfState st, std::size_t i);
EkfState ekf_unfreeze(EkfState st, std::size_t i);

/// Applies an error-state increment to the mean (pose on the right, landmarks additively).
TotalState ekf_retract(const EkfState& st, const Eigen::VectorXd& delta);

/// Symmetric within 1e-9 and smallest eigenvalue >= -1e-9.
bool covariance_valid(const Eigen::MatrixXd& p);

}  // namespace vslam

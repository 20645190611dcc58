#include "vslam/ekf.hpp"

#include <cmath>

namespace vslam {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double measurement_variance(double v) { return std::max(v, tol::kMinMeasurementVariance); }

// P + T K^T - K M^T, the Joseph-form update written with M = P H^T and T = K S - M.
void joseph_update(MatrixXd& p, const MatrixXd& t, const MatrixXd& k, const MatrixXd& m, Execution execution) {
  if (execution == Execution::serial) {
    p.noalias() += t * k.transpose();
    p.noalias() -= k * m.transpose();
  } else {
    const Index d = p.rows();
    constexpr Index kBlock = 32;
    const Index blocks = (d + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static)
    for (Index b = 0; b < blocks; ++b) {
      const Index r0 = b * kBlock;
      const Index rows = std::min(kBlock, d - r0);
      p.middleRows(r0, rows).noalias() += t.middleRows(r0, rows) * k.transpose();
      p.middleRows(r0, rows).noalias() -= k.middleRows(r0, rows) * m.transpose();
    }
  }
  p = 0.5 * (p + p.transpose()).eval();
}

}  // namespace

EkfState make_ekf(std::size_t n, const Pose& initial_pose, const Mat6& pose_covariance, Execution execution) {
  EkfState st;
  st.mean.pose = initial_pose;
  st.mean.landmarks.assign(n, Vec3::Constant(std::numeric_limits<double>::quiet_NaN()));
  st.covariance = pose_covariance;
  st.status.assign(n, LandmarkStatus::uninitialized);
  st.slot.assign(n, -1);
  st.execution = execution;
  return st;
}

Mat6 ekf_process_jacobian(const Twist& u, double dt) { return adjoint(se3_exp(u, dt).inverse()); }

EkfState ekf_predict(EkfState st, const Twist& u, double dt, const EkfNoise& noise) {
  if (!(dt > 0.0)) throw PreconditionError("ekf_predict: dt must be positive");
  st.mean.pose = st.mean.pose * se3_exp(u, dt);
  const Mat6 f = ekf_process_jacobian(u, dt);
  MatrixXd& p = st.covariance;
  const Index rest = p.cols() - 6;
  // Only the pose rows/columns move; landmark blocks are static.
  p.topLeftCorner<6, 6>() = f * p.topLeftCorner<6, 6>() * f.transpose();
  if (rest > 0) {
    p.topRightCorner(6, rest) = (f * p.topRightCorner(6, rest)).eval();
    p.bottomLeftCorner(rest, 6) = p.topRightCorner(6, rest).transpose();
  }
  // Velocity noise integrated over the step (first-order in the pose error).
  const double dt2 = dt * dt;
  for (int k = 0; k < 3; ++k) p(k, k) += noise.var_angular * dt2;
  for (int k = 3; k < 6; ++k) p(k, k) += noise.var_linear * dt2;
  return st;
}

LandmarkPrediction ekf_predict_measurement(const EkfState& st, std::size_t i) {
  if (st.slot.at(i) < 0) throw LifecycleError("ekf: landmark " + std::to_string(i) + " is uninitialized");
  const Pose& pose = st.mean.pose;
  const Vec3 r = pose.rotation.transpose() * (st.mean.landmarks[i] - pose.translation);
  const double d = r.norm();
  if (d < tol::kSeparation) throw DegenerateConfiguration("ekf: landmark coincides with the camera");
  LandmarkPrediction out;
  out.output = {r / d, 1.0 / d};
  out.basis = tangent_basis(out.output.direction);
  const Vec3& y = out.output.direction;
  const double z = out.output.inverse_depth;

  // dr/dxi = [r^x, -I], dr/dp = R^T
  Eigen::Matrix<double, 3, 6> dr_pose;
  dr_pose << skew(r), -Mat3::Identity();
  const Mat3 dr_lm = pose.rotation.transpose();

  Mat3 dout_dr;
  dout_dr.topRows<2>() = z * out.basis.transpose();
  dout_dr.row(2) = -z * z * y.transpose();
  out.pose_jacobian = dout_dr * dr_pose;
  out.landmark_jacobian = dout_dr * dr_lm;
  return out;
}

EkfState ekf_update(EkfState st, const MeasurementFrame& frame, const EkfNoise& noise) {
  EkfUpdateReport unused;
  return ekf_update(std::move(st), frame, noise, unused);
}

EkfState ekf_update(EkfState st, const MeasurementFrame& frame, const EkfNoise& noise, EkfUpdateReport& report) {
  if (frame.visible.size() != st.size()) throw StructuralError("ekf_update: frame landmark count mismatch");
  report = {};
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st.status[i] == LandmarkStatus::active && frame.visible[i]) used.push_back(i);
  }
  if (used.empty()) return st;
  report.landmarks_used = used.size();

  const Index m = 3 * static_cast<Index>(used.size());
  const MatrixXd& p = st.covariance;

  // Sparse H: a pose block plus one 3x3 block per landmark.
  MatrixXd h_pose(m, 6);
  std::vector<Mat3> h_lm(used.size());
  VectorXd residual(m);
  VectorXd r_diag(m);
  for (std::size_t j = 0; j < used.size(); ++j) {
    const std::size_t i = used[j];
    const LandmarkPrediction pred = ekf_predict_measurement(st, i);
    const Index row = 3 * static_cast<Index>(j);
    h_pose.middleRows<3>(row) = pred.pose_jacobian;
    h_lm[j] = pred.landmark_jacobian;
    const Bearing& meas = frame.output[i];
    residual.segment<2>(row) = pred.basis.transpose() * meas.direction;
    residual(row + 2) = meas.inverse_depth - pred.output.inverse_depth;
    r_diag.segment<3>(row) << measurement_variance(noise.var_bearing), measurement_variance(noise.var_bearing),
        measurement_variance(noise.var_inv_depth);
  }

  // M = P H^T
  MatrixXd pht = p.leftCols<6>() * h_pose.transpose();
  for (std::size_t j = 0; j < used.size(); ++j) {
    pht.middleCols<3>(3 * static_cast<Index>(j)).noalias() += p.middleCols<3>(st.offset(used[j])) * h_lm[j].transpose();
  }
  // S = H M + R
  MatrixXd s = h_pose * pht.topRows<6>();
  for (std::size_t j = 0; j < used.size(); ++j) {
    s.middleRows<3>(3 * static_cast<Index>(j)).noalias() += h_lm[j] * pht.middleRows<3>(st.offset(used[j]));
  }
  s = 0.5 * (s + s.transpose()).eval();
  s.diagonal() += r_diag;

  const Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    report.skipped = true;
    return st;
  }
  MatrixXd k = llt.solve(pht.transpose()).transpose();
  // Frozen landmarks keep their mean and marginal covariance.
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st.status[i] == LandmarkStatus::frozen) k.middleRows<3>(st.offset(i)).setZero();
  }

  const VectorXd delta = k * residual;
  st.mean = ekf_retract(st, delta);
  const MatrixXd t = k * s - pht;
  joseph_update(st.covariance, t, k, pht, st.execution);
  return st;
}

LandmarkInsertion ekf_insertion(const Pose& pose, const Bearing& measured) {
  const Vec3& y = measured.direction;
  const double z = measured.inverse_depth;
  const Vec3 r = y / z;
  LandmarkInsertion out;
  out.position = pose.transform(r);
  out.pose_jacobian << -pose.rotation * skew(r), pose.rotation;
  const Eigen::Matrix<double, 3, 2> b = tangent_basis(y);
  Mat3 dr;
  dr << b / z, -y / (z * z);
  out.measurement_jacobian = pose.rotation * dr;
  return out;
}

EkfState ekf_init_landmark(EkfState st, std::size_t i, const MeasurementFrame& frame, const EkfNoise& noise) {
  if (i >= st.size()) throw StructuralError("ekf_init_landmark: index out of range");
  if (st.status[i] != LandmarkStatus::uninitialized) {
    throw LifecycleError("ekf_init_landmark: landmark " + std::to_string(i) + " already initialized");
  }
  if (!frame.visible.at(i)) throw LifecycleError("ekf_init_landmark: landmark " + std::to_string(i) + " not visible");

  const LandmarkInsertion ins = ekf_insertion(st.mean.pose, frame.output[i]);
  const Vec3 r_diag(measurement_variance(noise.var_bearing), measurement_variance(noise.var_bearing),
                    measurement_variance(noise.var_inv_depth));
  const Index d = st.dimension();
  MatrixXd& p = st.covariance;

  Mat3 block = ins.pose_jacobian * p.topLeftCorner<6, 6>() * ins.pose_jacobian.transpose() +
               ins.measurement_jacobian * r_diag.asDiagonal() * ins.measurement_jacobian.transpose();
  block = 0.5 * (block + block.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(block);
  const Vec3 floored = eig.eigenvalues().cwiseMax(tol::kLandmarkCovarianceFloor);
  block = eig.eigenvectors() * floored.asDiagonal() * eig.eigenvectors().transpose();

  const MatrixXd cross = ins.pose_jacobian * p.topRows<6>();  // 3 x d
  MatrixXd grown(d + 3, d + 3);
  grown.topLeftCorner(d, d) = p;
  grown.bottomLeftCorner(3, d) = cross;
  grown.topRightCorner(d, 3) = cross.transpose();
  grown.bottomRightCorner<3, 3>() = block;
  p = std::move(grown);

  int next_slot = 0;
  for (int s : st.slot) next_slot = std::max(next_slot, s + 1);
  st.slot[i] = next_slot;
  st.mean.landmarks[i] = ins.position;
  st.status[i] = LandmarkStatus::active;
  return st;
}

EkfState ekf_freeze(EkfState st, std::size_t i) {
  if (st.status.at(i) != LandmarkStatus::active) throw LifecycleError("ekf_freeze: landmark is not active");
  st.status[i] = LandmarkStatus::frozen;
  return st;
}

EkfState ekf_unfreeze(EkfState st, std::size_t i) {
  if (st.status.at(i) != LandmarkStatus::frozen) throw LifecycleError("ekf_unfreeze: landmark is not frozen");
  st.status[i] = LandmarkStatus::active;
  return st;
}

TotalState ekf_retract(const EkfState& st, const VectorXd& delta) {
  if (delta.size() != st.dimension()) throw StructuralError("ekf_retract: increment has the wrong dimension");
  TotalState out = st.mean;
  out.pose = st.mean.pose * se3_exp(Twist::from_vector(delta.head<6>()));
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st.slot[i] >= 0) out.landmarks[i] += delta.segment<3>(st.offset(i));
  }
  return out;
}

bool covariance_valid(const MatrixXd& p) {
  if (p.size() == 0) return true;
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-9) return false;
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0) >= -1e-9;
}

}  // namespace vslam

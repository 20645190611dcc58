#include "vslam/checks.hpp"

#include "vslam/ekf.hpp"
#include "vslam/system.hpp"

#include <Eigen/Geometry>

#include <chrono>

namespace vslam {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 uniform_box(std::mt19937_64& rng, double half) {
  return Vec3(uniform(rng, -half, half), uniform(rng, -half, half), uniform(rng, -half, half));
}

double pose_distance(const Pose& a, const Pose& b) {
  return (a.homogeneous() - b.homogeneous()).cwiseAbs().maxCoeff();
}

double group_distance(const GroupElement& a, const GroupElement& b) {
  double d = pose_distance(a.pose, b.pose);
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, (a.landmarks[i].rotation - b.landmarks[i].rotation).cwiseAbs().maxCoeff());
    d = std::max(d, std::abs(a.landmarks[i].scale - b.landmarks[i].scale) / b.landmarks[i].scale);
  }
  return d;
}

double state_distance(const TotalState& a, const TotalState& b) {
  double d = pose_distance(a.pose, b.pose);
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, (a.landmarks[i] - b.landmarks[i]).norm());
  return d;
}

double output_distance(const Output& a, const Output& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, (a[i].direction - b[i].direction).norm());
    d = std::max(d, std::abs(a[i].inverse_depth - b[i].inverse_depth));
  }
  return d;
}

template <typename Body>
CheckResult timed(std::string name, const CheckOptions& opts, double tolerance, Body body) {
  CheckResult r{std::move(name), opts.samples, 0.0, tolerance, 0.0};
  std::mt19937_64 rng(opts.seed);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t s = 0; s < opts.samples; ++s) {
    const double res = body(rng);
    // NaN must fail the check.
    r.max_residual = std::isnan(res) ? std::numeric_limits<double>::infinity() : std::max(r.max_residual, res);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  return q.normalized().toRotationMatrix();
}

GroupElement random_group_element(std::size_t n, std::mt19937_64& rng) {
  GroupElement x;
  x.pose = {random_rotation(rng), uniform_box(rng, 1.0)};
  x.landmarks.resize(n);
  for (auto& l : x.landmarks) l = {random_rotation(rng), std::exp(uniform(rng, -1.0, 1.0))};
  return x;
}

TotalState random_total_state(std::size_t n, std::mt19937_64& rng) {
  TotalState xi;
  xi.pose = {random_rotation(rng), uniform_box(rng, 1.0)};
  xi.landmarks.resize(n);
  for (auto& p : xi.landmarks) {
    do {
      p = uniform_box(rng, 2.0);
    } while ((p - xi.pose.translation).norm() < 0.3);
  }
  return xi;
}

Twist random_twist(std::mt19937_64& rng) { return {uniform_box(rng, 1.0), uniform_box(rng, 1.0)}; }

OutputActionFn faulty_output_action(Fault fault) {
  if (fault == Fault::none) return output_action;
  return [](const GroupElement& x, const Output& yz) {
    Output out = output_action(x, yz);
    for (auto& b : out) b.direction = -b.direction;
    return out;
  };
}

CheckResult check_group_axioms(const CheckOptions& opts) {
  return timed("group axioms", opts, 1e-9, [&](std::mt19937_64& rng) {
    const std::size_t n = opts.landmarks;
    const GroupElement a = random_group_element(n, rng);
    const GroupElement b = random_group_element(n, rng);
    const GroupElement c = random_group_element(n, rng);
    const GroupElement id = GroupElement::identity(n);
    double r = group_distance(group_compose(group_compose(a, b), c), group_compose(a, group_compose(b, c)));
    r = std::max(r, group_distance(group_compose(a, id), a));
    r = std::max(r, group_distance(group_compose(id, a), a));
    r = std::max(r, group_distance(group_compose(a, group_inverse(a)), id));
    r = std::max(r, group_distance(group_compose(group_inverse(a), a), id));
    return r;
  });
}

CheckResult check_action_laws(const CheckOptions& opts) {
  return timed("action laws", opts, 1e-9, [&](std::mt19937_64& rng) {
    const std::size_t n = opts.landmarks;
    const GroupElement a = random_group_element(n, rng);
    const GroupElement b = random_group_element(n, rng);
    const TotalState xi = random_total_state(n, rng);
    const Output yz = measure(xi);
    const GroupElement id = GroupElement::identity(n);
    // Right actions: act(b, act(a, .)) = act(a b, .)
    double r = state_distance(state_action(id, xi), xi);
    r = std::max(r, state_distance(state_action(b, state_action(a, xi)), state_action(group_compose(a, b), xi)));
    r = std::max(r, output_distance(output_action(id, yz), yz));
    r = std::max(r, output_distance(output_action(b, output_action(a, yz)), output_action(group_compose(a, b), yz)));
    return r;
  });
}

CheckResult check_equivariance(const CheckOptions& opts, const OutputActionFn& rho) {
  return timed("equivariance", opts, 1e-9, [&](std::mt19937_64& rng) {
    const GroupElement x = random_group_element(opts.landmarks, rng);
    const TotalState xi = random_total_state(opts.landmarks, rng);
    return output_distance(rho(x, measure(xi)), measure(state_action(x, xi)));
  });
}

CheckResult check_lift(const CheckOptions& opts, double step) {
  return timed("lift condition", opts, 1e-6, [&](std::mt19937_64& rng) {
    const TotalState xi = random_total_state(opts.landmarks, rng);
    const Twist u = random_twist(rng);
    const Output yz = measure(xi);
    const AlgebraElement lambda = lift(yz, {u, predicted_flow(yz, u)});
    const TotalState plus = state_action(group_exp(lambda, step), xi);
    const TotalState minus = state_action(group_exp(lambda, -step), xi);
    const Mat4 pose_rate = (plus.pose.homogeneous() - minus.pose.homogeneous()) / (2.0 * step);
    double r = (pose_rate - xi.pose.homogeneous() * u.wedge()).cwiseAbs().maxCoeff();
    for (std::size_t i = 0; i < xi.size(); ++i) {
      r = std::max(r, ((plus.landmarks[i] - minus.landmarks[i]) / (2.0 * step)).norm());
    }
    return r;
  });
}

namespace {

// max |fd - analytic| / max(1, max |analytic|)
double relative_gap(const Eigen::MatrixXd& fd, const Eigen::MatrixXd& analytic) {
  return (fd - analytic).cwiseAbs().maxCoeff() / std::max(1.0, analytic.cwiseAbs().maxCoeff());
}

Vec3 measurement_coordinates(const EkfState& st, std::size_t i, const Eigen::Matrix<double, 3, 2>& basis) {
  const Bearing b = ekf_predict_measurement(st, i).output;
  Vec3 out;
  out << basis.transpose() * b.direction, b.inverse_depth;
  return out;
}

}  // namespace

CheckResult check_ekf_jacobians(const CheckOptions& opts, double step) {
  return timed("ekf jacobians", opts, 1e-5, [&](std::mt19937_64& rng) {
    const std::size_t n = std::max<std::size_t>(1, opts.landmarks);
    const TotalState xi = random_total_state(n, rng);
    const Twist u = random_twist(rng);
    const double dt = 0.5;

    // Process: xi' = log(exp(U dt)^-1 exp(xi) exp(U dt)).
    const Pose motion = se3_exp(u, dt);
    Mat6 fd_process;
    for (int c = 0; c < 6; ++c) {
      Vec6 e = Vec6::Zero();
      e(c) = step;
      const Vec6 plus = se3_log(motion.inverse() * se3_exp(Twist::from_vector(e)) * motion).vector();
      const Vec6 minus = se3_log(motion.inverse() * se3_exp(Twist::from_vector(-e)) * motion).vector();
      fd_process.col(c) = (plus - minus) / (2.0 * step);
    }
    double r = relative_gap(fd_process, ekf_process_jacobian(u, dt));

    // Measurement: derivative of the predicted output through the retraction.
    EkfState st = make_ekf(n, xi.pose);
    MeasurementFrame frame;
    frame.visible.assign(n, true);
    frame.output = measure(xi);
    for (std::size_t i = 0; i < n; ++i) st = ekf_init_landmark(std::move(st), i, frame, {});
    const Eigen::Index d = st.dimension();
    for (std::size_t i = 0; i < n; ++i) {
      const LandmarkPrediction pred = ekf_predict_measurement(st, i);
      Eigen::MatrixXd analytic = Eigen::MatrixXd::Zero(3, d);
      analytic.leftCols<6>() = pred.pose_jacobian;
      analytic.middleCols<3>(st.offset(i)) = pred.landmark_jacobian;
      Eigen::MatrixXd fd(3, d);
      for (Eigen::Index c = 0; c < d; ++c) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
        e(c) = step;
        EkfState sp = st, sm = st;
        sp.mean = ekf_retract(st, e);
        sm.mean = ekf_retract(st, -e);
        fd.col(c) = (measurement_coordinates(sp, i, pred.basis) - measurement_coordinates(sm, i, pred.basis)) /
                    (2.0 * step);
      }
      r = std::max(r, relative_gap(fd, analytic));

      // Insertion: landmark position from a perturbed pose and a perturbed measurement.
      const LandmarkInsertion ins = ekf_insertion(xi.pose, frame.output[i]);
      const Eigen::Matrix<double, 3, 2> basis = tangent_basis(frame.output[i].direction);
      Eigen::Matrix<double, 3, 6> fd_pose;
      for (int c = 0; c < 6; ++c) {
        Vec6 e = Vec6::Zero();
        e(c) = step;
        fd_pose.col(c) = (ekf_insertion(xi.pose * se3_exp(Twist::from_vector(e)), frame.output[i]).position -
                          ekf_insertion(xi.pose * se3_exp(Twist::from_vector(-e)), frame.output[i]).position) /
                         (2.0 * step);
      }
      Mat3 fd_meas;
      for (int c = 0; c < 3; ++c) {
        const auto perturbed = [&](double h) {
          Bearing b = frame.output[i];
          if (c < 2) {
            b.direction = (b.direction + h * basis.col(c)).normalized();
          } else {
            b.inverse_depth += h;
          }
          return ekf_insertion(xi.pose, b).position;
        };
        fd_meas.col(c) = (perturbed(step) - perturbed(-step)) / (2.0 * step);
      }
      r = std::max({r, relative_gap(fd_pose, ins.pose_jacobian), relative_gap(fd_meas, ins.measurement_jacobian)});
    }
    return r;
  });
}

std::vector<CheckResult> run_checks(const CheckOptions& opts, Fault fault) {
  CheckOptions lift_opts = opts;
  lift_opts.samples = std::max<std::size_t>(1, opts.samples / 5);
  return {check_group_axioms(opts), check_action_laws(opts), check_equivariance(opts, faulty_output_action(fault)),
          check_lift(lift_opts)};
}

}  // namespace vslam

#pragma once

// Randomized algebraic property checks and the samplers they use.

#include "vslam/group.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace vslam {

Mat3 random_rotation(std::mt19937_64& rng);
GroupElement random_group_element(std::size_t n, std::mt19937_64& rng);
/// Pose in a unit box, landmarks in [-2, 2]^3 at least 0.3 from the camera.
TotalState random_total_state(std::size_t n, std::mt19937_64& rng);
Twist random_twist(std::mt19937_64& rng);

struct CheckResult {
  std::string name;
  std::size_t samples = 0;
  double max_residual = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;
  bool passed() const { return max_residual < tolerance; }
};

using OutputActionFn = std::function<Output(const GroupElement&, const Output&)>;

/// Deliberately wrong output actions used to confirm the checks can fail.
enum class Fault { none, rho_sign };
OutputActionFn faulty_output_action(Fault fault);

struct CheckOptions {
  std::size_t samples = 1000;
  std::size_t landmarks = 10;
  std::uint64_t seed = 1;
};

/// Associativity, identity and inverse of the group product.
CheckResult check_group_axioms(const CheckOptions& opts);
/// Identity and compatibility laws of the right actions on states and outputs.
CheckResult check_action_laws(const CheckOptions& opts);
/// max |rho(X, h(xi)) - h(Upsilon(X, xi))| over random samples.
CheckResult check_equivariance(const CheckOptions& opts, const OutputActionFn& rho = output_action);
/// Central difference of t -> Upsilon(exp(t lambda), xi) at t = 0 against (PU, 0, ..., 0).
CheckResult check_lift(const CheckOptions& opts, double step = 1e-5);

/// Process, measurement and insertion Jacobians of the EKF against central
/// differences; residual is the largest error relative to max(1, |J|).
CheckResult check_ekf_jacobians(const CheckOptions& opts, double step = 1e-6);

std::vector<CheckResult> run_checks(const CheckOptions& opts, Fault fault = Fault::none);

}  // namespace vslam

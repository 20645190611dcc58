#pragma once

// Equivariant observer on VSLAM_n(3).
//
// The estimate is a group element X^ acting on a fixed reference configuration;
// the configuration estimate is Upsilon(X^, reference). Corrections are driven
// by the output error e = rho(X^-1, measurements), whose dynamics do not depend
// on the robot trajectory.

#include "vslam/system.hpp"

#include <cstddef>
#include <vector>

namespace vslam {

/// Operation not permitted in the landmark's current lifecycle state.
class LifecycleError : public std::logic_error {
 public:
  explicit LifecycleError(const std::string& what) : std::logic_error(what) {}
};

enum class LandmarkStatus { uninitialized, active, frozen };
enum class Integrator { geometric, additive };
enum class Execution { serial, parallel };

namespace tol {
/// Condition-number ceiling of the pose-innovation normal equations.
inline constexpr double kMaxCondition = 1e8;
}  // namespace tol

struct ObserverGains {
  double bearing = 0.05;  // k_Q
  double scale = 0.02;    // k_a
  double pose = 0.03;     // k_A

  void validate() const;
};

struct ObserverOptions {
  Integrator integrator = Integrator::geometric;
  /// Per-landmark kernels run under OpenMP when `parallel`; results are
  /// bit-identical to the serial path.
  Execution execution = Execution::serial;
};

struct ObserverState {
  GroupElement estimate;
  Pose reference_pose;
  std::vector<Vec3> reference_landmarks;
  /// h(reference), cached per landmark once created.
  Output reference_output;
  std::vector<LandmarkStatus> status;
  /// Inertial estimate held while a landmark is frozen.
  std::vector<Vec3> frozen_position;
  ObserverGains gains;
  ObserverOptions options;

  std::size_t size() const { return status.size(); }
  TotalState reference() const { return {reference_pose, reference_landmarks}; }
};

struct Innovation {
  Twist pose;                   // Delta_A (as a twist; applied through the wedge)
  std::vector<Vec3> bearing;    // Delta_Q^i (vee of the so(3) element)
  std::vector<double> scale;    // Delta_a^i
  bool degenerate = false;      // pose term zeroed: singular or ill-conditioned normal equations
  double condition = 0.0;       // condition number of the normal equations (inf when singular)
};

/// Observer with every landmark active and the given reference; X^ = id.
ObserverState make_observer(const TotalState& reference, ObserverGains gains, ObserverOptions options = {});
/// Observer with `n` uninitialized landmarks and the given reference pose; X^ = id.
ObserverState make_observer(std::size_t n, const Pose& reference_pose, ObserverGains gains,
                            ObserverOptions options = {});

/// (y^, z^)_i = rho(X^, h(reference)). Frozen landmarks report the bearing of
/// their held position. Throws LifecycleError for uninitialized landmarks.
Output estimated_output(const ObserverState& st);
Bearing estimated_output(const ObserverState& st, std::size_t i);

/// e = rho(X^-1, yz) for a full output vector.
Output output_error(const ObserverState& st, const Output& yz);
Bearing output_error(const ObserverState& st, std::size_t i, const Bearing& measured);

Innovation innovation(const ObserverState& st, const MeasurementFrame& frame);

/// One integration step over dt using `frame` (zero-order hold).
ObserverState step(ObserverState st, const MeasurementFrame& frame, double dt);
/// As above, also reporting the innovation that was applied.
ObserverState step(ObserverState st, const MeasurementFrame& frame, double dt, Innovation& applied);

ObserverState initialize_landmark(ObserverState st, std::size_t i, const MeasurementFrame& frame);
ObserverState freeze(ObserverState st, std::size_t i);
ObserverState unfreeze(ObserverState st, std::size_t i);

/// Configuration estimate Upsilon(X^, reference). Frozen landmarks report
/// their held position; uninitialized ones are NaN.
TotalState reconstruct(const ObserverState& st);

/// Per-landmark Lyapunov storage (l_y, l_z) against a measurement frame.
/// NaN for landmarks that are not active and visible.
struct LyapunovSample {
  std::vector<double> bearing;
  std::vector<double> depth;
  double total() const;
};
LyapunovSample lyapunov(const ObserverState& st, const MeasurementFrame& frame);

}  // namespace vslam

namespace vslam {

/// Single stationary landmark whose bearing error starts at the antipode of
/// the reference bearing, offset tangentially by `perturbation`.
struct AntipodalProbe {
  double initial_distance = 0.0;  // |e_y(0) - y_ref|
  double final_distance = 0.0;    // |e_y(T) - y_ref|
  double max_drift = 0.0;         // max_k |e_y(k) - e_y(0)|
};
AntipodalProbe antipodal_probe(double perturbation, std::size_t steps, double dt, ObserverGains gains);

}  // namespace vslam

#pragma once

// Quadcopter ground truth: 8-state point-mass with attitude-resolved thrust,
// wind-driven quadratic drag and additive force noise.

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace siocp::plant {

/// x = [r (3), v (3), roll, pitch]
using State = Eigen::Matrix<double, 8, 1>;
/// u = [roll rate, pitch rate, thrust]
using Input = Eigen::Vector3d;

namespace idx {
inline constexpr int kPos = 0;
inline constexpr int kVel = 3;
inline constexpr int kRoll = 6;
inline constexpr int kPitch = 7;
}  // namespace idx

struct InputBounds {
  double max_rate = 4.0;      // |p|, |q| [rad/s]
  double max_thrust = 2.0 * 9.81;  // [N], 2 m g for m = 1
  double min_thrust = 0.0;

  Input clip(const Input& u) const;
  bool contains(const Input& u, double tol = 1e-9) const;
};

struct WindDragConfig {
  double mass = 1.0;
  double gravity = 9.81;
  Eigen::Vector3d drag_body{0.3, 0.3, 0.6};
  Eigen::Vector3d noise_sigma{0.2, 0.2, 0.1};  // force [N]
  bool wind_enabled = true;
  bool drag_enabled = true;
  bool noise_enabled = true;
  double wind_time_offset = 0.0;  // shifts the phase of the wind field [s]

  void validate() const;
};

Eigen::Vector3d wind_velocity(const Eigen::Vector3d& r, double t);

/// Body-to-world rotation for zero yaw. Its third column is the thrust
/// direction [sin(pitch), -cos(pitch) sin(roll), cos(pitch) cos(roll)].
Eigen::Matrix3d rotation_body_to_world(double roll, double pitch);
Eigen::Vector3d thrust_direction(double roll, double pitch);

/// Aerodynamic force -m R D (v_b |v_b|) + noise with v_b = R^T (v - v_wind).
Eigen::Vector3d true_disturbance(const State& x, double t, const WindDragConfig& cfg,
                                 const Eigen::Vector3d& noise);

/// Known part of the vehicle dynamics plus an additive acceleration on the
/// velocity rows (the learned residual for f_nom, or Delta_v / m for the truth).
State dynamics(const State& x, const Input& u, const Eigen::Vector3d& extra_accel, const WindDragConfig& cfg);

struct StepResult {
  State next;
  /// Delta_v / m at the step midpoint, the acceleration the nominal model must learn.
  Eigen::Vector3d disturbance_accel;
  State midpoint;
};

/// One classical RK4 step of length h with u and the noise draw held.
/// Throws SimulationAbort if roll or pitch reach pi/2 and DataIntegrityError
/// on out-of-bounds input.
StepResult step(const State& x, const Input& u, double t, double h, const WindDragConfig& cfg,
                const Eigen::Vector3d& noise, const InputBounds& bounds = {});

/// Seeded per-step force noise.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : rng_(seed) {}
  Eigen::Vector3d sample(const WindDragConfig& cfg);

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace siocp::plant

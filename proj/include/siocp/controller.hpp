#pragma once

// Reference robust tube MPC: cross-entropy search over nominal input
// sequences, constraints tightened by a contraction tube whose growth is
// driven by the disturbance margin, and a linear ancillary tracking law.

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "siocp/plant.hpp"

namespace siocp::control {

using plant::Input;
using plant::State;
using AncillaryGain = Eigen::Matrix<double, 3, 8>;

struct Obstacle {
  Eigen::Vector3d center;
  double radius = 0.0;
};

struct Scenario {
  Eigen::Vector3d start{-2.0, 0.0, 1.0};
  Eigen::Vector3d goal{7.0, 0.0, 1.0};
  double duration = 5.0;
  std::vector<Obstacle> obstacles;
  double z_min = 0.8;
  double z_max = 1.2;
  double vehicle_radius = 0.1;
  double goal_tolerance = 0.3;

  /// Obstacle layout with a corridor at x = 3 m and a third sphere at x = 5.5 m.
  static Scenario corridor_default();
  void validate() const;

  /// Total depth by which position r, inflated by `tube`, intrudes into an
  /// obstacle or leaves the altitude band. Zero when safe.
  double violation(const Eigen::Vector3d& r, double tube = 0.0) const;
  /// Smallest distance from r to an obstacle surface, less the vehicle radius.
  double obstacle_clearance(const Eigen::Vector3d& r) const;
  /// Half-width of the gap between the first two obstacles, minus the vehicle radius.
  double corridor_half_clearance() const;
};

struct ControllerConfig {
  int horizon_steps = 10;
  double dt = 0.05;
  double lambda_c = 2.0;  // tube contraction rate [1/s]

  int population = 256;
  int elites = 32;
  int iterations = 5;
  Eigen::Vector3d initial_std{1.5, 1.5, 3.0};
  Eigen::Vector3d min_std{0.05, 0.05, 0.1};
  double mean_smoothing = 0.8;

  double w_goal = 1.0;
  double w_terminal = 5.0;
  double w_effort = 0.01;
  double w_tilt = 0.1;
  double w_speed = 10.0;    // on speed above speed_limit
  double speed_limit = 3.0; // soft [m/s]
  double tilt_limit = 0.4;  // soft [rad]
  double max_tilt = 0.7;    // cap on the attitude target of the ancillary law [rad]
  double violation_penalty = 1e6;

  plant::InputBounds bounds;
  // Ancillary law: position/velocity PD into attitude targets, then an attitude loop.
  double kp = 4.0;
  double kd = 4.0;
  double k_att = 10.0;

  std::uint64_t seed = 1;

  void validate() const;
  AncillaryGain gain(double mass, double gravity) const;
};

struct TubePlan {
  std::vector<State> states;   // nominal x_0..x_P
  std::vector<Input> inputs;   // nominal u_0..u_{P-1}
  std::vector<double> tube;    // Phi_0..Phi_P (velocity-error units)
  std::vector<double> tube_position;  // Phi_i / lambda_c [m]
  double cost = 0.0;
  double violation = 0.0;
  bool feasible = false;
};

/// Phi_{i+1} = Phi_i + dt (-lambda_c Phi_i + d_bar), i = 0..steps-1.
std::vector<double> tube_propagate(double phi0, double d_bar, double lambda_c, double dt, int steps);

class TubePlanner {
 public:
  TubePlanner(Scenario scenario, ControllerConfig cfg, plant::WindDragConfig vehicle);

  /// Plans from nominal state x0 with initial tube phi0 using a frozen model
  /// snapshot. feasible is false when no violation-free rollout was found.
  TubePlan plan(const State& x0, double phi0, const Eigen::VectorXd& theta, double d_bar);

  /// Forgets the warm start.
  void reset();
  void set_seed(std::uint64_t seed) { cfg_.seed = seed; calls_ = 0; }

  const Scenario& scenario() const { return scenario_; }
  const ControllerConfig& config() const { return cfg_; }

 private:
  struct Rollouts {
    Eigen::ArrayXd cost;
    Eigen::ArrayXd violation;
    std::vector<Eigen::Matrix<double, 8, Eigen::Dynamic>> states;  // per step, 8 x population
  };
  Rollouts rollout(const State& x0, const std::vector<Eigen::Matrix3Xd>& inputs, const Eigen::VectorXd& theta,
                   const std::vector<double>& tube_pos) const;

  Scenario scenario_;
  ControllerConfig cfg_;
  plant::WindDragConfig vehicle_;
  Eigen::Matrix3Xd warm_mean_;
  std::uint64_t calls_ = 0;
};

/// u = u_0 + K (x - x_0), clipped to the input bounds. For rate rows with an
/// attitude feedback term, the attitude target implied by the translational
/// error is capped at +/- max_tilt; below the cap the law is exactly linear.
Input ancillary_control(const State& x, const TubePlan& plan, const AncillaryGain& gain,
                        const plant::InputBounds& bounds,
                        double max_tilt = std::numeric_limits<double>::infinity());
Input ancillary_control(const State& x, const State& x_ref, const Input& u_ref, const AncillaryGain& gain,
                        const plant::InputBounds& bounds,
                        double max_tilt = std::numeric_limits<double>::infinity());

nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ControllerConfig& c);
ControllerConfig controller_from_json(const nlohmann::json& j);

}  // namespace siocp::control

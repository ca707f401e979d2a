#pragma once

// Reference disturbance trajectories with a known time-Lipschitz constant,
// scored by direct brute force. Used to check the integral score and the
// threshold-to-margin conversion independently of the estimation pipeline.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace siocp::history {

struct DisturbanceTrajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> d;
  double score = 0.0;     // sup over grid pairs of ||integral of d||
  double sup_norm = 0.0;  // max_i ||d(t_i)||
  std::size_t first = 0;
  std::size_t second = 0;
};

/// Piecewise-linear random trajectory on [0, horizon] with
/// ||d(t_{i+1}) - d(t_i)|| <= lipschitz * grid_dt. Deterministic per seed.
DisturbanceTrajectory lipschitz_disturbance_oracle(double lipschitz, double horizon, double grid_dt,
                                                   std::uint64_t seed, int dim = 3);

/// Scalar-direction ramp of slope `lipschitz` peaking at `peak` at the end of
/// the window, clamped at zero. `peak / lipschitz` should be grid aligned.
DisturbanceTrajectory worst_case_ramp(double peak, double lipschitz, double horizon, double grid_dt,
                                      int dim = 3);

/// Brute-force score of a sampled trajectory: trapezoid cumulative integral
/// followed by an exhaustive pair scan.
void brute_force_score(DisturbanceTrajectory& traj);

}  // namespace siocp::history

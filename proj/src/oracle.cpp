#include "siocp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "siocp/errors.hpp"

namespace siocp::history {

namespace {

std::size_t grid_intervals(double horizon, double grid_dt) {
  return static_cast<std::size_t>(std::llround(horizon / grid_dt));
}

Eigen::VectorXd random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = n(rng);
  } while (v.norm() < 1e-9);
  return v.normalized();
}

}  // namespace

void brute_force_score(DisturbanceTrajectory& traj) {
  const std::size_t n = traj.d.size();
  std::vector<Eigen::VectorXd> cum(n);
  cum[0] = Eigen::VectorXd::Zero(traj.d[0].size());
  for (std::size_t i = 1; i < n; ++i) {
    cum[i] = cum[i - 1] + 0.5 * (traj.t[i] - traj.t[i - 1]) * (traj.d[i - 1] + traj.d[i]);
  }
  traj.score = 0.0;
  traj.sup_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    traj.sup_norm = std::max(traj.sup_norm, traj.d[i].norm());
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = (cum[j] - cum[i]).norm();
      if (s > traj.score) {
        traj.score = s;
        traj.first = i;
        traj.second = j;
      }
    }
  }
}

DisturbanceTrajectory lipschitz_disturbance_oracle(double lipschitz, double horizon, double grid_dt,
                                                   std::uint64_t seed, int dim) {
  if (!(lipschitz > 0.0)) throw ConfigError("oracle: lipschitz must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t intervals = grid_intervals(horizon, grid_dt);

  DisturbanceTrajectory traj;
  traj.t.resize(intervals + 1);
  traj.d.resize(intervals + 1);

  // Initial magnitude spans both regimes of the margin formula: below and
  // above lipschitz * horizon.
  const double magnitude = 2.0 * lipschitz * horizon * unit(rng);
  traj.d[0] = magnitude * random_unit(rng, dim);
  traj.t[0] = 0.0;

  // Derivative: slowly rotating direction with a per-trajectory speed and
  // per-step jitter, clipped to the Lipschitz ball.
  Eigen::VectorXd direction = random_unit(rng, dim);
  const double speed = unit(rng);
  const double wander = 2.0 * unit(rng);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < intervals; ++i) {
    Eigen::VectorXd kick(dim);
    for (int c = 0; c < dim; ++c) kick[c] = n(rng);
    direction = (direction + wander * std::sqrt(grid_dt) * kick).normalized();
    Eigen::VectorXd rate = lipschitz * speed * (0.5 + 0.5 * unit(rng)) * direction;
    if (rate.norm() > lipschitz) rate *= lipschitz / rate.norm();
    traj.d[i + 1] = traj.d[i] + grid_dt * rate;
    traj.t[i + 1] = static_cast<double>(i + 1) * grid_dt;
  }
  brute_force_score(traj);
  return traj;
}

DisturbanceTrajectory worst_case_ramp(double peak, double lipschitz, double horizon, double grid_dt, int dim) {
  const std::size_t intervals = grid_intervals(horizon, grid_dt);
  DisturbanceTrajectory traj;
  traj.t.resize(intervals + 1);
  traj.d.resize(intervals + 1);
  Eigen::VectorXd axis = Eigen::VectorXd::Zero(dim);
  axis[0] = 1.0;
  for (std::size_t i = 0; i <= intervals; ++i) {
    traj.t[i] = static_cast<double>(i) * grid_dt;
    const double before_end = horizon - traj.t[i];
    traj.d[i] = std::max(peak - lipschitz * before_end, 0.0) * axis;
  }
  brute_force_score(traj);
  return traj;
}

}  // namespace siocp::history

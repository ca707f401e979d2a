#include "siocp/plant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "siocp/errors.hpp"

namespace siocp::plant {

Input InputBounds::clip(const Input& u) const {
  return {std::clamp(u[0], -max_rate, max_rate), std::clamp(u[1], -max_rate, max_rate),
          std::clamp(u[2], min_thrust, max_thrust)};
}

bool InputBounds::contains(const Input& u, double tol) const {
  return std::abs(u[0]) <= max_rate + tol && std::abs(u[1]) <= max_rate + tol &&
         u[2] >= min_thrust - tol && u[2] <= max_thrust + tol;
}

void WindDragConfig::validate() const {
  if (!(mass > 0.0)) throw ConfigError("plant: mass must be positive");
  if ((drag_body.array() < 0.0).any()) throw ConfigError("plant: drag coefficients must be nonnegative");
  if ((noise_sigma.array() < 0.0).any()) throw ConfigError("plant: noise sigma must be nonnegative");
}

Eigen::Vector3d wind_velocity(const Eigen::Vector3d& r, double t) {
  return {2.0 * std::sin(0.5 * t) + std::sin(2.0 * t) + 0.5 * r.x(),
          2.4 * std::cos(0.4 * t) + 1.2 * std::cos(1.8 * t) + 0.5 * r.y(),
          std::sin(0.3 * t) + 0.2 * r.z()};
}

Eigen::Matrix3d rotation_body_to_world(double roll, double pitch) {
  return (Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()))
      .toRotationMatrix();
}

Eigen::Vector3d thrust_direction(double roll, double pitch) {
  return {std::sin(pitch), -std::cos(pitch) * std::sin(roll), std::cos(pitch) * std::cos(roll)};
}

Eigen::Vector3d true_disturbance(const State& x, double t, const WindDragConfig& cfg,
                                 const Eigen::Vector3d& noise) {
  Eigen::Vector3d force = cfg.noise_enabled ? noise : Eigen::Vector3d::Zero();
  if (!cfg.drag_enabled) return force;
  const Eigen::Vector3d r = x.segment<3>(idx::kPos);
  const Eigen::Vector3d wind =
      cfg.wind_enabled ? wind_velocity(r, t + cfg.wind_time_offset) : Eigen::Vector3d::Zero();
  const Eigen::Vector3d v_rel = x.segment<3>(idx::kVel) - wind;
  const Eigen::Matrix3d rot = rotation_body_to_world(x[idx::kRoll], x[idx::kPitch]);
  const Eigen::Vector3d v_b = rot.transpose() * v_rel;
  force -= cfg.mass * rot * (cfg.drag_body.asDiagonal() * (v_b * v_b.norm()));
  return force;
}

State dynamics(const State& x, const Input& u, const Eigen::Vector3d& extra_accel, const WindDragConfig& cfg) {
  State dx;
  dx.segment<3>(idx::kPos) = x.segment<3>(idx::kVel);
  dx.segment<3>(idx::kVel) = Eigen::Vector3d(0.0, 0.0, -cfg.gravity) +
                             thrust_direction(x[idx::kRoll], x[idx::kPitch]) * (u[2] / cfg.mass) +
                             extra_accel;
  dx[idx::kRoll] = u[0];
  dx[idx::kPitch] = u[1];
  return dx;
}

StepResult step(const State& x, const Input& u, double t, double h, const WindDragConfig& cfg,
                const Eigen::Vector3d& noise, const InputBounds& bounds) {
  if (!(h > 0.0)) throw DataIntegrityError("plant: step length must be positive");
  if (!u.allFinite() || !bounds.contains(u)) {
    std::ostringstream os;
    os << "plant: input [" << u.transpose() << "] outside bounds";
    throw DataIntegrityError(os.str());
  }
  auto f = [&](const State& s, double tt) {
    return dynamics(s, u, true_disturbance(s, tt, cfg, noise) / cfg.mass, cfg);
  };
  const State k1 = f(x, t);
  const State x2 = x + 0.5 * h * k1;
  const State k2 = f(x2, t + 0.5 * h);
  const State k3 = f(x + 0.5 * h * k2, t + 0.5 * h);
  const State k4 = f(x + h * k3, t + h);

  StepResult out;
  out.next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  out.midpoint = x2;
  out.disturbance_accel = true_disturbance(x2, t + 0.5 * h, cfg, noise) / cfg.mass;

  constexpr double kLimit = std::numbers::pi / 2.0;
  if (!out.next.allFinite() || std::abs(out.next[idx::kRoll]) >= kLimit ||
      std::abs(out.next[idx::kPitch]) >= kLimit) {
    std::ostringstream os;
    os << "plant: attitude blow-up at t=" << t + h << " (roll " << out.next[idx::kRoll] << ", pitch "
       << out.next[idx::kPitch] << ")";
    throw SimulationAbort(os.str());
  }
  return out;
}

Eigen::Vector3d NoiseSource::sample(const WindDragConfig& cfg) {
  Eigen::Vector3d n;
  for (int i = 0; i < 3; ++i) n[i] = cfg.noise_sigma[i] * normal_(rng_);
  return n;
}

}  // namespace siocp::plant

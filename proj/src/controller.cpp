#include "siocp/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "siocp/errors.hpp"
#include "siocp/model.hpp"

namespace siocp::control {

namespace {

using StateBatch = Eigen::Matrix<double, 8, Eigen::Dynamic>;

Eigen::Vector3d vec3(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

nlohmann::json to_array(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

Scenario Scenario::corridor_default() {
  Scenario s;
  const double half_gap = 0.3;
  s.obstacles = {
      {{3.0, -(half_gap + 0.7), 1.0}, 0.7},
      {{3.0, half_gap + 0.3, 1.0}, 0.3},
      {{5.5, 0.3, 1.0}, 0.4},
  };
  return s;
}

void Scenario::validate() const {
  if (!(duration > 0.0)) throw ConfigError("scenario: duration must be positive");
  if (!(z_max > z_min)) throw ConfigError("scenario: empty altitude band");
  if (!(vehicle_radius >= 0.0)) throw ConfigError("scenario: negative vehicle radius");
  for (const auto& o : obstacles) {
    if (!(o.radius > 0.0)) throw ConfigError("scenario: obstacle radius must be positive");
  }
  if (obstacles.size() >= 2 && corridor_half_clearance() <= 0.0) {
    throw ConfigError("scenario: corridor gap does not exceed the vehicle diameter");
  }
  if (obstacle_clearance(goal) <= 0.0) throw ConfigError("scenario: goal lies inside an obstacle");
}

double Scenario::violation(const Eigen::Vector3d& r, double tube) const {
  double v = 0.0;
  for (const auto& o : obstacles) {
    v += std::max(0.0, o.radius + vehicle_radius + tube - (r - o.center).norm());
  }
  v += std::max(0.0, z_min + tube - r.z());
  v += std::max(0.0, r.z() - (z_max - tube));
  return v;
}

double Scenario::obstacle_clearance(const Eigen::Vector3d& r) const {
  double c = std::numeric_limits<double>::infinity();
  for (const auto& o : obstacles) c = std::min(c, (r - o.center).norm() - o.radius - vehicle_radius);
  return c;
}

double Scenario::corridor_half_clearance() const {
  if (obstacles.size() < 2) return std::numeric_limits<double>::infinity();
  const auto& a = obstacles[0];
  const auto& b = obstacles[1];
  return 0.5 * ((a.center - b.center).norm() - a.radius - b.radius) - vehicle_radius;
}

void ControllerConfig::validate() const {
  if (!(lambda_c > 0.0)) throw ConfigError("controller: lambda_c must be positive");
  if (!(max_tilt > 0.0 && max_tilt < 1.5)) throw ConfigError("controller: max_tilt must be in (0, 1.5) rad");
  if (horizon_steps < 1) throw ConfigError("controller: horizon must have at least one step");
  if (!(dt > 0.0)) throw ConfigError("controller: dt must be positive");
  if (!(population > elites && elites >= 1)) throw ConfigError("controller: need population > elites >= 1");
  if (iterations < 1) throw ConfigError("controller: need at least one CEM iteration");
  if ((initial_std.array() <= 0.0).any()) throw ConfigError("controller: initial_std must be positive");
}

AncillaryGain ControllerConfig::gain(double mass, double gravity) const {
  AncillaryGain k = AncillaryGain::Zero();
  using namespace plant::idx;
  // Lateral: a = -kp e_r - kd e_v; pitch target a_x / g, roll target -a_y / g.
  k(0, kPos + 1) = k_att * kp / gravity;
  k(0, kVel + 1) = k_att * kd / gravity;
  k(0, kRoll) = -k_att;
  k(1, kPos + 0) = -k_att * kp / gravity;
  k(1, kVel + 0) = -k_att * kd / gravity;
  k(1, kPitch) = -k_att;
  k(2, kPos + 2) = -mass * kp;
  k(2, kVel + 2) = -mass * kd;
  return k;
}

std::vector<double> tube_propagate(double phi0, double d_bar, double lambda_c, double dt, int steps) {
  std::vector<double> phi(static_cast<std::size_t>(steps) + 1);
  phi[0] = phi0;
  for (int i = 0; i < steps; ++i) {
    phi[i + 1] = phi[i] + dt * (-lambda_c * phi[i] + d_bar);
  }
  return phi;
}

TubePlanner::TubePlanner(Scenario scenario, ControllerConfig cfg, plant::WindDragConfig vehicle)
    : scenario_(std::move(scenario)), cfg_(std::move(cfg)), vehicle_(std::move(vehicle)) {
  scenario_.validate();
  cfg_.validate();
  reset();
}

void TubePlanner::reset() {
  warm_mean_.resize(3, cfg_.horizon_steps);
  warm_mean_.colwise() = Input(0.0, 0.0, vehicle_.mass * vehicle_.gravity);
}

TubePlanner::Rollouts TubePlanner::rollout(const State& x0, const std::vector<Eigen::Matrix3Xd>& inputs,
                                           const Eigen::VectorXd& theta,
                                           const std::vector<double>& tube_pos) const {
  const Eigen::Index n = inputs.front().cols();
  const double h = cfg_.dt;
  const double m = vehicle_.mass;
  const double g = vehicle_.gravity;
  const double hover = m * g;

  auto f = [&](const StateBatch& x, const Eigen::Matrix3Xd& u) {
    const model::AccelBatch learned = model::forward_batch(theta, x.middleRows<5>(3));
    const Eigen::ArrayXXd roll = x.row(6).array();
    const Eigen::ArrayXXd pitch = x.row(7).array();
    const Eigen::ArrayXXd acc = u.row(2).array() / m;
    StateBatch dx(8, n);
    dx.topRows<3>() = x.middleRows<3>(3);
    dx.row(3) = (pitch.sin() * acc).matrix() + learned.row(0);
    dx.row(4) = (-pitch.cos() * roll.sin() * acc).matrix() + learned.row(1);
    dx.row(5) = ((pitch.cos() * roll.cos() * acc) - g).matrix() + learned.row(2);
    dx.row(6) = u.row(0);
    dx.row(7) = u.row(1);
    return dx;
  };

  Rollouts out;
  out.cost = Eigen::ArrayXd::Zero(n);
  out.violation = Eigen::ArrayXd::Zero(n);
  out.states.reserve(inputs.size());
  StateBatch x = x0.replicate(1, n);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& u = inputs[i];
    const StateBatch k1 = f(x, u);
    const StateBatch k2 = f(x + 0.5 * h * k1, u);
    const StateBatch k3 = f(x + 0.5 * h * k2, u);
    const StateBatch k4 = f(x + h * k3, u);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    const Eigen::ArrayXd dist = (x.topRows<3>().colwise() - scenario_.goal).colwise().norm().transpose().array();
    const Eigen::ArrayXd roll = x.row(6).transpose().array();
    const Eigen::ArrayXd pitch = x.row(7).transpose().array();
    const Eigen::ArrayXd tilt_excess =
        (roll.abs() - cfg_.tilt_limit).max(0.0).square() + (pitch.abs() - cfg_.tilt_limit).max(0.0).square();
    const Eigen::ArrayXd effort = u.row(0).transpose().array().square() + u.row(1).transpose().array().square() +
                                  ((u.row(2).transpose().array() - hover) / hover).square();
    const Eigen::ArrayXd speed_excess =
        (x.middleRows<3>(3).colwise().norm().transpose().array() - cfg_.speed_limit).max(0.0).square();
    out.cost += cfg_.w_goal * dist + cfg_.w_tilt * (roll.square() + pitch.square() + 100.0 * tilt_excess) +
                cfg_.w_effort * effort + cfg_.w_speed * speed_excess;
    if (i + 1 == inputs.size()) out.cost += cfg_.w_terminal * dist;

    const double rho = tube_pos[i + 1];
    Eigen::ArrayXd viol = Eigen::ArrayXd::Zero(n);
    for (const auto& o : scenario_.obstacles) {
      const Eigen::ArrayXd d = (x.topRows<3>().colwise() - o.center).colwise().norm().transpose().array();
      viol += (o.radius + scenario_.vehicle_radius + rho - d).max(0.0);
    }
    const Eigen::ArrayXd z = x.row(2).transpose().array();
    viol += (scenario_.z_min + rho - z).max(0.0) + (z - (scenario_.z_max - rho)).max(0.0);
    out.violation += viol;
    out.states.push_back(x);
  }
  out.cost += cfg_.violation_penalty * out.violation;
  return out;
}

TubePlan TubePlanner::plan(const State& x0, double phi0, const Eigen::VectorXd& theta, double d_bar) {
  if (!(d_bar >= 0.0) || !std::isfinite(d_bar)) throw DataIntegrityError("plan: d_bar must be finite and >= 0");
  if (!(phi0 >= 0.0)) throw DataIntegrityError("plan: phi0 must be >= 0");
  const int steps = cfg_.horizon_steps;
  const int pop = cfg_.population;

  TubePlan plan;
  plan.tube = tube_propagate(phi0, d_bar, cfg_.lambda_c, cfg_.dt, steps);
  plan.tube_position.resize(plan.tube.size());
  std::transform(plan.tube.begin(), plan.tube.end(), plan.tube_position.begin(),
                 [&](double p) { return p / cfg_.lambda_c; });

  std::seed_seq seq{static_cast<std::uint64_t>(cfg_.seed), calls_++};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::Matrix3Xd mean = warm_mean_;
  Eigen::Matrix3Xd stddev = cfg_.initial_std.replicate(1, steps);

  std::vector<Eigen::Matrix3Xd> samples(steps, Eigen::Matrix3Xd(3, pop));
  double best_cost = std::numeric_limits<double>::infinity();
  double best_violation = 0.0;
  Eigen::Matrix3Xd best_inputs = mean;
  std::vector<State> best_states;

  auto keep_best = [&](const Rollouts& r, Eigen::Index col, const std::vector<Eigen::Matrix3Xd>& in) {
    if (!(r.cost[col] < best_cost)) return;
    best_cost = r.cost[col];
    best_violation = r.violation[col];
    best_states.assign(1, x0);
    for (int i = 0; i < steps; ++i) {
      best_inputs.col(i) = in[i].col(col);
      best_states.push_back(r.states[i].col(col));
    }
  };

  std::vector<Eigen::Index> order(pop);
  for (int it = 0; it < cfg_.iterations; ++it) {
    for (int i = 0; i < steps; ++i) {
      for (int s = 0; s < pop; ++s) {
        Input u = mean.col(i);
        if (s > 0) {
          for (int c = 0; c < 3; ++c) u[c] += stddev(c, i) * normal(rng);
        }
        samples[i].col(s) = cfg_.bounds.clip(u);
      }
    }
    const Rollouts r = rollout(x0, samples, theta, plan.tube_position);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + cfg_.elites, order.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return r.cost[a] < r.cost[b]; });
    keep_best(r, order[0], samples);

    for (int i = 0; i < steps; ++i) {
      Input m = Input::Zero();
      for (int e = 0; e < cfg_.elites; ++e) m += samples[i].col(order[e]);
      m /= cfg_.elites;
      Input var = Input::Zero();
      for (int e = 0; e < cfg_.elites; ++e) var += (samples[i].col(order[e]) - m).cwiseAbs2();
      var /= cfg_.elites;
      mean.col(i) = cfg_.mean_smoothing * m + (1.0 - cfg_.mean_smoothing) * mean.col(i);
      stddev.col(i) = var.cwiseSqrt().cwiseMax(cfg_.min_std);
    }
  }

  // The refined mean itself is a candidate.
  {
    std::vector<Eigen::Matrix3Xd> single(steps, Eigen::Matrix3Xd(3, 1));
    for (int i = 0; i < steps; ++i) single[i].col(0) = cfg_.bounds.clip(mean.col(i));
    const Rollouts r = rollout(x0, single, theta, plan.tube_position);
    keep_best(r, 0, single);
  }

  plan.cost = best_cost;
  plan.violation = best_violation;
  plan.feasible = best_violation == 0.0;
  plan.states = std::move(best_states);
  plan.inputs.resize(steps);
  for (int i = 0; i < steps; ++i) plan.inputs[i] = best_inputs.col(i);

  warm_mean_.leftCols(steps - 1) = best_inputs.rightCols(steps - 1);
  warm_mean_.col(steps - 1) = best_inputs.col(steps - 1);
  return plan;
}

Input ancillary_control(const State& x, const State& x_ref, const Input& u_ref, const AncillaryGain& gain,
                        const plant::InputBounds& bounds, double max_tilt) {
  using namespace plant::idx;
  const State e = x - x_ref;
  Input u = u_ref + gain * e;
  const int attitude[2] = {kRoll, kPitch};
  for (int row = 0; row < 2; ++row) {
    const int a = attitude[row];
    const double k_att = -gain(row, a);
    if (!(k_att > 0.0)) continue;
    // Row = k_att * (target - attitude) with target = x_ref[a] + translational part.
    const double translational = (gain.row(row).dot(e) - gain(row, a) * e[a]) / k_att;
    const double target = std::clamp(x_ref[a] + translational, -max_tilt, max_tilt);
    u[row] = u_ref[row] + k_att * (target - x[a]);
  }
  return bounds.clip(u);
}

Input ancillary_control(const State& x, const TubePlan& plan, const AncillaryGain& gain,
                        const plant::InputBounds& bounds, double max_tilt) {
  if (plan.states.empty() || plan.inputs.empty()) throw DataIntegrityError("ancillary: empty plan");
  return ancillary_control(x, plan.states.front(), plan.inputs.front(), gain, bounds, max_tilt);
}

nlohmann::json to_json(const Scenario& s) {
  nlohmann::json j;
  j["start"] = to_array(s.start);
  j["goal"] = to_array(s.goal);
  j["duration"] = s.duration;
  j["z_min"] = s.z_min;
  j["z_max"] = s.z_max;
  j["vehicle_radius"] = s.vehicle_radius;
  j["goal_tolerance"] = s.goal_tolerance;
  j["obstacles"] = nlohmann::json::array();
  for (const auto& o : s.obstacles) j["obstacles"].push_back({{"center", to_array(o.center)}, {"radius", o.radius}});
  return j;
}

Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s = Scenario::corridor_default();
  try {
    if (j.contains("start")) s.start = vec3(j["start"]);
    if (j.contains("goal")) s.goal = vec3(j["goal"]);
    s.duration = j.value("duration", s.duration);
    s.z_min = j.value("z_min", s.z_min);
    s.z_max = j.value("z_max", s.z_max);
    s.vehicle_radius = j.value("vehicle_radius", s.vehicle_radius);
    s.goal_tolerance = j.value("goal_tolerance", s.goal_tolerance);
    if (j.contains("obstacles")) {
      s.obstacles.clear();
      for (const auto& o : j["obstacles"]) s.obstacles.push_back({vec3(o.at("center")), o.at("radius").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const ControllerConfig& c) {
  return {{"horizon_steps", c.horizon_steps},
          {"dt", c.dt},
          {"lambda_c", c.lambda_c},
          {"population", c.population},
          {"elites", c.elites},
          {"iterations", c.iterations},
          {"initial_std", to_array(c.initial_std)},
          {"min_std", to_array(c.min_std)},
          {"mean_smoothing", c.mean_smoothing},
          {"w_goal", c.w_goal},
          {"w_terminal", c.w_terminal},
          {"w_effort", c.w_effort},
          {"w_tilt", c.w_tilt},
          {"w_speed", c.w_speed},
          {"speed_limit", c.speed_limit},
          {"tilt_limit", c.tilt_limit},
          {"max_tilt", c.max_tilt},
          {"violation_penalty", c.violation_penalty},
          {"max_rate", c.bounds.max_rate},
          {"max_thrust", c.bounds.max_thrust},
          {"min_thrust", c.bounds.min_thrust},
          {"kp", c.kp},
          {"kd", c.kd},
          {"k_att", c.k_att},
          {"seed", c.seed}};
}

ControllerConfig controller_from_json(const nlohmann::json& j) {
  ControllerConfig c;
  try {
    c.horizon_steps = j.value("horizon_steps", c.horizon_steps);
    c.dt = j.value("dt", c.dt);
    c.lambda_c = j.value("lambda_c", c.lambda_c);
    c.population = j.value("population", c.population);
    c.elites = j.value("elites", c.elites);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("initial_std")) c.initial_std = vec3(j["initial_std"]);
    if (j.contains("min_std")) c.min_std = vec3(j["min_std"]);
    c.mean_smoothing = j.value("mean_smoothing", c.mean_smoothing);
    c.w_goal = j.value("w_goal", c.w_goal);
    c.w_terminal = j.value("w_terminal", c.w_terminal);
    c.w_effort = j.value("w_effort", c.w_effort);
    c.w_tilt = j.value("w_tilt", c.w_tilt);
    c.w_speed = j.value("w_speed", c.w_speed);
    c.speed_limit = j.value("speed_limit", c.speed_limit);
    c.tilt_limit = j.value("tilt_limit", c.tilt_limit);
    c.max_tilt = j.value("max_tilt", c.max_tilt);
    c.violation_penalty = j.value("violation_penalty", c.violation_penalty);
    c.bounds.max_rate = j.value("max_rate", c.bounds.max_rate);
    c.bounds.max_thrust = j.value("max_thrust", c.bounds.max_thrust);
    c.bounds.min_thrust = j.value("min_thrust", c.bounds.min_thrust);
    c.kp = j.value("kp", c.kp);
    c.kd = j.value("kd", c.kd);
    c.k_att = j.value("k_att", c.k_att);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("controller: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace siocp::control

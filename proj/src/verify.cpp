#include "siocp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>

#include "siocp/conformal.hpp"
#include "siocp/controller.hpp"
#include "siocp/errors.hpp"
#include "siocp/history.hpp"
#include "siocp/model.hpp"
#include "siocp/oracle.hpp"
#include "siocp/plant.hpp"

namespace siocp::verify {

namespace {

using Eigen::VectorXd;

void fail(Report& r, nlohmann::json counterexample) {
  if (r.passed) {
    r.passed = false;
    r.counterexample = std::move(counterexample);
  }
}

// Score streams that try to push the running coverage away from 1 - alpha.
double adversarial_score(int kind, double q, double bound, std::int64_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (kind) {
    case 0:  // always just above the threshold
      return std::clamp(q + 1e-9, 0.0, bound);
    case 1:  // always exactly on the threshold
      return std::clamp(q, 0.0, bound);
    case 2:  // long alternating bursts of misses and hits
      return ((k / 500) % 2 == 0) ? bound : 0.0;
    case 3:  // miss whenever the threshold is low, otherwise cover
      return q < 0.5 * bound ? bound : 0.0;
    default:  // uniform noise
      return bound * unit(rng);
  }
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"conformal-bounds", "margin-soundness", "score-oracle",
          "jacobian",         "plant-convergence", "controller-monotonicity"};
}

Report run_suite(const std::string& name) {
  if (name == "conformal-bounds") return conformal_bounds();
  if (name == "margin-soundness") return margin_soundness();
  if (name == "score-oracle") return score_oracle();
  if (name == "jacobian") return jacobian_check();
  if (name == "plant-convergence") return plant_convergence();
  if (name == "controller-monotonicity") return controller_monotonicity();
  throw ConfigError("unknown verify suite: " + name);
}

Report conformal_bounds(int streams, int length) {
  Report r;
  r.suite = "conformal-bounds";
  double worst_ratio = 0.0;
  for (int s = 0; s < streams; ++s) {
    std::mt19937_64 rng(1000 + s);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double alpha = 0.02 + 0.3 * unit(rng);
    const double eta = 0.01 + 0.5 * unit(rng);
    const double bound = 0.5 + 5.0 * unit(rng);
    const int kind = s % 5;
    double q = 0.0;
    std::int64_t hits = 0;
    for (std::int64_t k = 1; k <= length; ++k) {
      const double score = adversarial_score(kind, q, bound, k, rng);
      hits += score <= q ? 1 : 0;
      q = conformal::ocp_update(q, score, eta, alpha);
      const double error = std::abs(static_cast<double>(hits) / static_cast<double>(k) - (1.0 - alpha));
      const double limit = conformal::coverage_bound(bound, eta, eta, k);
      ++r.checks;
      worst_ratio = std::max(worst_ratio, error / limit);
      if (error > limit) {
        fail(r, {{"stream", s}, {"kind", kind}, {"k", k}, {"alpha", alpha}, {"eta", eta}, {"bound", bound},
                 {"error", error}, {"limit", limit}});
      }
    }
  }
  r.details["streams"] = streams;
  r.details["length"] = length;
  r.details["worst_error_over_bound"] = worst_ratio;
  return r;
}

Report margin_soundness(int trajectories) {
  Report r;
  r.suite = "margin-soundness";
  const double horizon = 0.5;
  const double grid_dt = 0.01;
  std::int64_t sqrt_cases = 0;
  std::int64_t trapezoid_cases = 0;
  std::int64_t violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> log_l(std::log(0.5), std::log(50.0));
  for (int i = 0; i < trajectories; ++i) {
    const double lipschitz = std::exp(log_l(rng));
    const history::DisturbanceTrajectory traj =
        history::lipschitz_disturbance_oracle(lipschitz, horizon, grid_dt, 7000000 + static_cast<std::uint64_t>(i));
    conformal::OcpConfig cfg;
    cfg.lipschitz = lipschitz;
    cfg.horizon = horizon;
    // The tightest threshold that still covers this window is the score itself;
    // the margin is monotone in q, so larger thresholds are implied.
    const conformal::MarginRecord m = conformal::margin_from_threshold(traj.score, cfg);
    if (m.margin_case == conformal::MarginCase::SqrtCase) ++sqrt_cases;
    if (m.margin_case == conformal::MarginCase::TrapezoidCase) ++trapezoid_cases;
    ++r.checks;
    worst_slack = std::min(worst_slack, m.d_bar - traj.sup_norm);
    if (traj.sup_norm > m.d_bar) {
      ++violations;
      fail(r, {{"trajectory", i}, {"lipschitz", lipschitz}, {"score", traj.score}, {"sup_norm", traj.sup_norm},
               {"margin", m.d_bar}, {"case", conformal::to_string(m.margin_case)}});
    }
  }
  const std::int64_t required = std::min<std::int64_t>(10000, trajectories / 10);
  if (sqrt_cases < required || trapezoid_cases < required) {
    fail(r, {{"reason", "margin case under-exercised"}, {"sqrt", sqrt_cases}, {"trapezoid", trapezoid_cases}});
  }
  r.details["trajectories"] = trajectories;
  r.details["violations"] = violations;
  r.details["sqrt_cases"] = sqrt_cases;
  r.details["trapezoid_cases"] = trapezoid_cases;
  r.details["min_margin_minus_sup"] = worst_slack;
  return r;
}

Report score_oracle(int windows) {
  Report r;
  r.suite = "score-oracle";
  const double window = 0.5;
  const double grid_dt = 0.01;
  const int n = static_cast<int>(std::llround(window / grid_dt)) + 1;
  // A nonlinear nominal model that mixes state, input and parameters.
  const history::NominalDynamics f = [](const VectorXd& x, const VectorXd& u, const VectorXd& theta) {
    VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      out[i] = std::sin(x[(i + 1) % x.size()]) * theta[i % theta.size()] + u[i % u.size()] - 0.3 * x[i] * x[i];
    }
    return out;
  };
  double worst = 0.0;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int w = 0; w < windows; ++w) {
    const int dim = 2 + w % 7;
    history::HistoryStack stack(window, grid_dt);
    std::vector<history::Sample> samples(n);
    VectorXd x = VectorXd::Zero(dim);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < dim; ++c) x[c] += 0.1 * normal(rng);
      VectorXd u(3);
      VectorXd theta(4);
      for (int c = 0; c < 3; ++c) u[c] = normal(rng);
      for (int c = 0; c < 4; ++c) theta[c] = normal(rng);
      samples[i] = {i * grid_dt, x, u, theta};
      stack.push(samples[i].t, x, u, theta);
    }
    const double fast = history::integral_score(stack, f).value;

    // Brute force: integrate every pair separately.
    double brute = 0.0;
    for (int a = 0; a < n; ++a) {
      VectorXd integral = VectorXd::Zero(dim);
      for (int b = a + 1; b < n; ++b) {
        const history::Sample& s0 = samples[b - 1];
        const history::Sample& s1 = samples[b];
        integral += 0.5 * (s1.t - s0.t) * (f(s0.x, s1.u, s0.theta) + f(s1.x, s1.u, s1.theta));
        brute = std::max(brute, (s1.x - samples[a].x - integral).norm());
      }
    }
    const double err = std::abs(fast - brute);
    worst = std::max(worst, err);
    ++r.checks;
    if (err > 1e-12) fail(r, {{"window", w}, {"dim", dim}, {"integral_score", fast}, {"brute_force", brute}});
  }
  r.details["windows"] = windows;
  r.details["max_abs_error"] = worst;
  return r;
}

Report jacobian_check(int points) {
  using namespace model::layout;
  Report r;
  r.suite = "jacobian";
  const double step = 1e-5;
  const double kink_margin = 1e-3;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  int accepted = 0;
  int attempts = 0;
  while (accepted < points) {
    if (++attempts > 100 * points) {
      fail(r, {{"reason", "could not sample kink-free points"}, {"accepted", accepted}});
      break;
    }
    const VectorXd theta = model::MlpParams::random(5000 + static_cast<std::uint64_t>(attempts), 1.0).theta;
    model::Features xi;
    for (int c = 0; c < kInput; ++c) xi[c] = normal(rng);

    // Reject points where a pre-activation sits within reach of the finite-difference step.
    VectorXd h = xi;
    double closest = std::numeric_limits<double>::infinity();
    int offset_w = kW1;
    int fan_in = kInput;
    for (int layer = 0; layer < 3; ++layer) {
      const Eigen::Map<const Eigen::MatrixXd> W(theta.data() + offset_w, kHidden, fan_in);
      const Eigen::Map<const VectorXd> b(theta.data() + offset_w + kHidden * fan_in, kHidden);
      const VectorXd z = W * h + b;
      closest = std::min(closest, z.cwiseAbs().minCoeff());
      h = z.cwiseMax(0.0);
      offset_w += kHidden * fan_in + kHidden;
      fan_in = kHidden;
    }
    if (closest < kink_margin) continue;
    ++accepted;

    const Eigen::MatrixXd analytic = model::jacobian(theta, xi);
    Eigen::MatrixXd numeric(kOutput, kParams);
    VectorXd perturbed = theta;
    for (int p = 0; p < kParams; ++p) {
      perturbed[p] = theta[p] + step;
      const model::Accel plus = model::forward(perturbed, xi);
      perturbed[p] = theta[p] - step;
      const model::Accel minus = model::forward(perturbed, xi);
      perturbed[p] = theta[p];
      numeric.col(p) = (plus - minus) / (2.0 * step);
    }
    const double rel = (analytic - numeric).norm() / std::max(analytic.norm(), 1e-12);
    worst = std::max(worst, rel);
    ++r.checks;
    if (rel > 1e-4) fail(r, {{"point", accepted}, {"relative_error", rel}});
  }
  r.details["points"] = accepted;
  r.details["max_relative_error"] = worst;
  return r;
}

Report plant_convergence() {
  Report r;
  r.suite = "plant-convergence";
  plant::WindDragConfig cfg;
  cfg.noise_enabled = false;
  const Eigen::Vector3d no_noise = Eigen::Vector3d::Zero();
  const plant::Input u(0.3, -0.2, 10.5);
  plant::State x0 = plant::State::Zero();
  x0 << 0.5, -0.3, 1.0, 1.0, 0.5, -0.2, 0.1, -0.15;
  const double duration = 1.0;

  auto integrate = [&](double h) {
    plant::State x = x0;
    const int n = static_cast<int>(std::llround(duration / h));
    for (int i = 0; i < n; ++i) x = plant::step(x, u, i * h, h, cfg, no_noise).next;
    return x;
  };
  const std::vector<double> steps = {0.1, 0.05, 0.025, 0.0125};
  std::vector<plant::State> finals;
  for (double h : steps) finals.push_back(integrate(h));
  nlohmann::json orders = nlohmann::json::array();
  double min_order = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 2 < finals.size(); ++i) {
    const double e1 = (finals[i] - finals[i + 1]).norm();
    const double e2 = (finals[i + 1] - finals[i + 2]).norm();
    const double order = std::log2(e1 / e2);
    orders.push_back(order);
    min_order = std::min(min_order, order);
    ++r.checks;
  }
  if (!(min_order >= 3.8)) fail(r, {{"observed_orders", orders}});
  r.details["step_sizes"] = steps;
  r.details["observed_orders"] = orders;
  r.details["min_order"] = min_order;
  return r;
}

Report controller_monotonicity() {
  Report r;
  r.suite = "controller-monotonicity";
  const control::Scenario scenario = control::Scenario::corridor_default();
  control::ControllerConfig cfg;
  cfg.seed = 17;
  const plant::WindDragConfig vehicle;
  const VectorXd theta = model::MlpParams::zeros().theta;

  // Tube recursion: monotone in d_bar, closed form for phi0 = 0.
  double tube_err = 0.0;
  for (int i = 0; i <= 20; ++i) {
    const double d_lo = 0.25 * i;
    const std::vector<double> lo = control::tube_propagate(0.0, d_lo, cfg.lambda_c, cfg.dt, cfg.horizon_steps);
    const std::vector<double> hi =
        control::tube_propagate(0.0, d_lo + 0.25, cfg.lambda_c, cfg.dt, cfg.horizon_steps);
    const double a = 1.0 - cfg.lambda_c * cfg.dt;
    for (int s = 0; s <= cfg.horizon_steps; ++s) {
      ++r.checks;
      if (hi[s] < lo[s]) fail(r, {{"reason", "tube not monotone in d_bar"}, {"d_bar", d_lo}, {"step", s}});
      tube_err = std::max(tube_err, std::abs(lo[s] - d_lo / cfg.lambda_c * (1.0 - std::pow(a, s))));
    }
  }
  if (tube_err > 1e-12) fail(r, {{"reason", "tube recursion differs from closed form"}, {"error", tube_err}});

  // Planned clearance over a d_bar grid from states heading straight at the
  // last obstacle, where the obstacle constraint is active.
  const std::vector<Eigen::Vector3d> starts = {{3.9, 0.3, 1.0}, {4.1, 0.2, 1.0}, {4.3, 0.4, 1.0}};
  nlohmann::json clearances = nlohmann::json::array();
  for (const Eigen::Vector3d& start : starts) {
    plant::State x0 = plant::State::Zero();
    x0.segment<3>(0) = start;
    x0[3] = 2.0;
    double previous = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 10; ++i) {
      const double d_bar = 0.3 * i;
      control::TubePlanner planner(scenario, cfg, vehicle);
      const control::TubePlan plan = planner.plan(x0, 0.0, theta, d_bar);
      double clearance = std::numeric_limits<double>::infinity();
      double slack = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < plan.states.size(); ++s) {
        const double c = scenario.obstacle_clearance(plan.states[s].segment<3>(0));
        clearance = std::min(clearance, c);
        slack = std::min(slack, c - plan.tube_position[s]);
      }
      clearances.push_back({{"start", {start.x(), start.y(), start.z()}},
                            {"d_bar", d_bar},
                            {"feasible", plan.feasible},
                            {"clearance", clearance}});
      ++r.checks;
      if (!plan.feasible) continue;
      if (slack < -1e-12) {
        fail(r, {{"reason", "feasible plan leaves its tube-tightened constraints"}, {"d_bar", d_bar},
                 {"slack", slack}});
      }
      if (clearance < previous) {
        fail(r, {{"reason", "clearance decreased with larger d_bar"}, {"d_bar", d_bar}, {"clearance", clearance},
                 {"previous", previous}});
      }
      previous = std::max(previous, clearance);
    }
  }
  r.details["clearance_grid"] = clearances;
  return r;
}

nlohmann::json to_json(const Report& r) {
  return {{"suite", r.suite},
          {"passed", r.passed},
          {"checks", r.checks},
          {"details", r.details},
          {"counterexample", r.counterexample}};
}

}  // namespace siocp::verify

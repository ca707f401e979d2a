#include "siocp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "siocp/errors.hpp"
#include "siocp/history.hpp"

namespace siocp::harness {

namespace {

using plant::State;
using Eigen::VectorXd;

constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kPlannerStream = 2;
constexpr std::uint64_t kWindStream = 3;

std::uint64_t derive_seed(std::uint64_t seed, int episode, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(episode), static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

model::Features features(const State& x) { return x.segment<5>(plant::idx::kVel); }

State hover_state(const Eigen::Vector3d& r) {
  State x = State::Zero();
  x.segment<3>(plant::idx::kPos) = r;
  return x;
}

// Level-flight trim at a fixed position: tilt and thrust that cancel gravity
// and the learned acceleration, with the tilt capped at max_tilt.
struct HoverTrim {
  State state;
  plant::Input input;
};

HoverTrim hover_trim(const Eigen::Vector3d& anchor, const VectorXd& theta, const plant::WindDragConfig& plant_cfg,
                     double max_tilt) {
  State ref = hover_state(anchor);
  const Eigen::Vector3d learned = model::forward(theta, features(ref));
  Eigen::Vector3d force = plant_cfg.mass * (Eigen::Vector3d(0.0, 0.0, plant_cfg.gravity) - learned);
  const double thrust = force.norm();
  const Eigen::Vector3d dir = force / thrust;
  const double pitch = std::clamp(std::asin(std::clamp(dir.x(), -1.0, 1.0)), -max_tilt, max_tilt);
  const double roll = std::clamp(std::atan2(-dir.y(), dir.z()), -max_tilt, max_tilt);
  ref[plant::idx::kRoll] = roll;
  ref[plant::idx::kPitch] = pitch;
  return {ref, plant::Input(0.0, 0.0, thrust)};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }
std::string fmt_opt(const std::optional<bool>& v) { return v ? (*v ? "1" : "0") : std::string(); }

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct PlannedWindow {
  std::vector<Eigen::Vector3d> positions;  // nominal r_1..r_P
  std::vector<double> radii;
};

}  // namespace

nlohmann::json to_json(const RunMetrics& m) {
  return {{"coverage_pointwise", m.coverage_pointwise},
          {"pointwise_count", m.pointwise_count},
          {"coverage_score", m.coverage_score},
          {"score_count", m.score_count},
          {"mean_d_bar", m.mean_d_bar},
          {"max_d_bar", m.max_d_bar},
          {"margin_count", m.margin_count},
          {"mean_tube", m.mean_tube},
          {"violations", m.violations},
          {"safe_fraction", m.safe_fraction},
          {"safe_count", m.safe_count},
          {"episodes", m.episodes},
          {"goals_reached", m.goals_reached},
          {"goal_reached", m.goal_reached},
          {"goal_time", m.goal_time},
          {"plans", m.plans},
          {"infeasible_plans", m.infeasible_plans},
          {"hover_fallbacks", m.hover_fallbacks},
          {"tube_exceed_rate", m.tube_exceed_rate},
          {"tube_exceed_and_covered_rate", m.tube_exceed_and_covered_rate},
          {"tube_checks", m.tube_checks},
          {"empirical_lipschitz_max", m.empirical_lipschitz_max},
          {"empirical_lipschitz_p99", m.empirical_lipschitz_p99},
          {"lipschitz_exceeded", m.lipschitz_exceeded},
          {"model_lipschitz_bound", m.model_lipschitz_bound},
          {"max_theta_norm", m.max_theta_norm},
          {"aborted", m.aborted},
          {"abort_reason", m.abort_reason}};
}

EpisodeResult run_episode(const RunConfig& cfg, int episode, conformal::ThreadBank& bank,
                          std::int64_t& global_step, TrainingLog* training) {
  const int steps = cfg.steps_per_episode();
  const int sub = cfg.substeps();
  const int horizon = static_cast<int>(cfg.ocp.threads());
  const double h = cfg.grid_dt;
  const double dt = cfg.ocp.dt;
  const double hover_thrust = cfg.plant.mass * cfg.plant.gravity;
  if (bank.size() != cfg.ocp.threads()) bank = conformal::ThreadBank(cfg.ocp.threads(), cfg.ocp.q_init);

  plant::WindDragConfig truth = cfg.plant;
  if (cfg.randomize_wind_phase || episode > 0) {
    std::mt19937_64 rng(derive_seed(cfg.seed, episode, kWindStream));
    truth.wind_time_offset += std::uniform_real_distribution<double>(0.0, cfg.wind_phase_range)(rng);
  }
  plant::NoiseSource noise(derive_seed(cfg.seed, episode, kNoiseStream));
  control::ControllerConfig ctrl = cfg.controller;
  ctrl.seed = derive_seed(cfg.seed, episode, kPlannerStream);
  control::TubePlanner planner(cfg.scenario, ctrl, cfg.plant);
  const control::AncillaryGain gain = ctrl.gain(cfg.plant.mass, cfg.plant.gravity);

  model::MlpParams params = cfg.prior.materialize();
  const history::NominalDynamics f_nom = [&](const VectorXd& x, const VectorXd& u, const VectorXd& theta) {
    const State s = x;
    return VectorXd(plant::dynamics(s, u, model::forward(theta, features(s)), cfg.plant));
  };

  EpisodeResult out;
  RunMetrics& m = out.metrics;
  m.episodes = 1;
  out.steps.reserve(steps);
  out.inner.reserve(static_cast<std::size_t>(steps) * sub);

  history::HistoryStack stack(cfg.ocp.horizon, h);
  State x = hover_state(cfg.scenario.start);
  plant::Input u(0.0, 0.0, hover_thrust);
  stack.push(0.0, x, u, params.theta);

  std::vector<State> at_step;
  std::vector<std::optional<PlannedWindow>> windows;
  std::optional<control::TubePlan> last_plan;  // plan issued at the previous step
  std::optional<control::TubePlan> last_feasible;
  int last_feasible_k = -1;
  std::optional<Eigen::Vector3d> hold_anchor;
  int inner_index = 0;

  try {
    for (int k = 0; k < steps; ++k) {
      const double t_k = k * dt;
      const std::int64_t gk = global_step + k;
      at_step.push_back(x);

      StepRecord rec;
      rec.episode = episode;
      rec.k = k;
      rec.global_k = gk;
      rec.t = t_k;
      rec.thread = static_cast<std::size_t>(gk % horizon);

      if (k >= horizon) {
        const history::ScoreResult score = history::integral_score(stack, f_nom);
        rec.score = score.value;
        rec.q_tested = bank.threshold(rec.thread);
        const double q = bank.update(gk, score.value, cfg.ocp);
        const conformal::MarginRecord margin = conformal::margin_from_threshold(q, cfg.ocp);
        rec.q_active = q;
        rec.margin_case = margin.margin_case;
        rec.d_bar = margin.d_bar;
      } else {
        const conformal::MarginRecord margin = conformal::initial_margin(gk, cfg.ocp);
        rec.q_active = bank.threshold(rec.thread);
        rec.margin_case = margin.margin_case;
        rec.d_bar = margin.d_bar;
      }

      // Keep following the previous nominal while the vehicle is inside its tube.
      State nominal0 = x;
      double phi0 = 0.0;
      if (last_plan && last_plan->feasible) {
        const State& predicted = last_plan->states[1];
        const double err = (x.segment<3>(0) - predicted.segment<3>(0)).norm();
        if (err <= last_plan->tube_position[1]) {
          nominal0 = predicted;
          phi0 = ctrl.lambda_c * err;
        }
      }
      control::TubePlan plan = planner.plan(nominal0, phi0, params.theta, rec.d_bar);
      ++m.plans;
      rec.feasible = plan.feasible;
      rec.cost = plan.cost;

      if (plan.feasible) {
        u = control::ancillary_control(x, plan, gain, ctrl.bounds, ctrl.max_tilt);
        rec.nominal = plan.states[0].segment<3>(0);
        rec.tube_pos0 = plan.tube_position[0];
        rec.tube_pos_max = *std::max_element(plan.tube_position.begin(), plan.tube_position.end());
        PlannedWindow w;
        for (int i = 1; i <= horizon; ++i) {
          w.positions.push_back(plan.states[i].segment<3>(0));
          w.radii.push_back(plan.tube_position[i]);
        }
        windows.emplace_back(std::move(w));
        last_feasible = plan;
        last_feasible_k = k;
        hold_anchor.reset();
      } else {
        ++m.infeasible_plans;
        windows.emplace_back(std::nullopt);
        const int offset = k - last_feasible_k;
        if (last_feasible && offset < horizon) {
          rec.fallback = "tail";
          u = control::ancillary_control(x, last_feasible->states[offset], last_feasible->inputs[offset], gain,
                                         ctrl.bounds, ctrl.max_tilt);
          rec.nominal = last_feasible->states[offset].segment<3>(0);
          rec.tube_pos0 = last_feasible->tube_position[offset];
        } else {
          rec.fallback = "hover";
          ++m.hover_fallbacks;
          if (!hold_anchor) {
            Eigen::Vector3d a = x.segment<3>(0);
            const double margin = 0.25 * (cfg.scenario.z_max - cfg.scenario.z_min);
            a.z() = std::clamp(a.z(), cfg.scenario.z_min + margin, cfg.scenario.z_max - margin);
            hold_anchor = a;
          }
          const HoverTrim trim = hover_trim(*hold_anchor, params.theta, cfg.plant, ctrl.tilt_limit);
          u = control::ancillary_control(x, trim.state, trim.input, gain, ctrl.bounds, ctrl.max_tilt);
          rec.nominal = trim.state.segment<3>(0);
        }
      }
      last_plan = std::move(plan);
      out.steps.push_back(rec);

      for (int s = 0; s < sub; ++s, ++inner_index) {
        const double t = inner_index * h;
        const model::Features xi = features(x);
        const model::Accel learned = model::forward(params.theta, xi);
        const Eigen::Vector3d vdot_nom = plant::dynamics(x, u, learned, cfg.plant).segment<3>(plant::idx::kVel);
        const plant::StepResult step = plant::step(x, u, t, h, truth, noise.sample(truth), ctrl.bounds);

        InnerRecord ir;
        ir.episode = episode;
        ir.t = t;
        ir.x = x;
        ir.u = u;
        ir.d_true = step.disturbance_accel - model::forward(params.theta, features(step.midpoint));
        ir.wind = truth.wind_enabled ? plant::wind_velocity(x.segment<3>(0), t + truth.wind_time_offset)
                                     : Eigen::Vector3d::Zero();

        const State prev = x;
        x = step.next;
        const model::Accel eps = model::residual_eps_acc(x.segment<3>(plant::idx::kVel),
                                                         prev.segment<3>(plant::idx::kVel), h, vdot_nom);
        if (training) training->emplace_back(xi, eps + learned);
        if (cfg.adapt_enabled) model::adapt_in_place(params, xi, eps, cfg.adapt);

        ir.theta_norm = params.theta.norm();
        ir.violation = cfg.scenario.violation(x.segment<3>(0)) > 0.0;
        m.max_theta_norm = std::max(m.max_theta_norm, ir.theta_norm);
        if (!m.goal_reached && (x.segment<3>(0) - cfg.scenario.goal).norm() <= cfg.scenario.goal_tolerance) {
          m.goal_reached = true;
          m.goal_time = t + h;
        }
        out.inner.push_back(ir);
        stack.push((inner_index + 1) * h, x, u, params.theta);
      }
    }
  } catch (const std::exception& e) {
    m.aborted = true;
    m.abort_reason = e.what();
  }
  at_step.push_back(x);
  global_step += steps;
  m.goals_reached = m.goal_reached ? 1 : 0;
  m.model_lipschitz_bound = model::lipschitz_upper_bound(params.theta);

  // Retrospective labels.
  const int done_steps = static_cast<int>(out.steps.size());
  const int inner_count = static_cast<int>(out.inner.size());
  int pointwise_hits = 0;
  int score_hits = 0;
  int safe_hits = 0;
  int exceed = 0;
  int exceed_covered = 0;
  double d_bar_sum = 0.0;
  double tube_sum = 0.0;
  int tube_n = 0;
  for (int k = 0; k < done_steps; ++k) {
    StepRecord& rec = out.steps[k];
    if (k + horizon < done_steps && k >= horizon && out.steps[k + horizon].score) {
      rec.covered_score = *out.steps[k + horizon].score <= rec.q_active;
      ++m.score_count;
      score_hits += *rec.covered_score ? 1 : 0;
    }
    const int first = k * sub;
    const int last = (k + horizon) * sub;
    if (last <= inner_count) {
      double sup = 0.0;
      bool safe = true;
      for (int i = first; i < last; ++i) {
        sup = std::max(sup, out.inner[i].d_true.norm());
        safe = safe && !out.inner[i].violation;
      }
      rec.sup_d_true = sup;
      rec.covered_pointwise = sup <= rec.d_bar;
      ++m.pointwise_count;
      pointwise_hits += *rec.covered_pointwise ? 1 : 0;
      ++m.safe_count;
      safe_hits += safe ? 1 : 0;
    }
    if (windows[k] && k + horizon < static_cast<int>(at_step.size())) {
      bool exceeded = false;
      for (int i = 0; i < horizon; ++i) {
        const Eigen::Vector3d r = at_step[k + 1 + i].segment<3>(0);
        exceeded = exceeded || (r - windows[k]->positions[i]).norm() > windows[k]->radii[i];
      }
      rec.tube_exceeded = exceeded;
      ++m.tube_checks;
      if (exceeded) {
        ++exceed;
        if (rec.covered_score.value_or(false)) ++exceed_covered;
      }
    }
    if (rec.margin_case != conformal::MarginCase::InitialPhase) {
      d_bar_sum += rec.d_bar;
      m.max_d_bar = std::max(m.max_d_bar, rec.d_bar);
      ++m.margin_count;
    }
    if (rec.feasible) {
      tube_sum += rec.tube_pos_max;
      ++tube_n;
    }
  }
  for (const auto& ir : out.inner) m.violations += ir.violation ? 1 : 0;
  m.coverage_pointwise = m.pointwise_count ? static_cast<double>(pointwise_hits) / m.pointwise_count : 1.0;
  m.coverage_score = m.score_count ? static_cast<double>(score_hits) / m.score_count : 1.0;
  m.safe_fraction = m.safe_count ? static_cast<double>(safe_hits) / m.safe_count : 1.0;
  m.mean_d_bar = m.margin_count ? d_bar_sum / m.margin_count : 0.0;
  m.mean_tube = tube_n ? tube_sum / tube_n : 0.0;
  m.tube_exceed_rate = m.tube_checks ? static_cast<double>(exceed) / m.tube_checks : 0.0;
  m.tube_exceed_and_covered_rate = m.tube_checks ? static_cast<double>(exceed_covered) / m.tube_checks : 0.0;

  // Smooth the logged residual over one controller period before differencing
  // so per-step force noise does not dominate the rate estimate.
  if (inner_count > 2 * sub) {
    std::vector<Eigen::Vector3d> smooth;
    for (int i = 0; i + sub <= inner_count; ++i) {
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      for (int s = 0; s < sub; ++s) acc += out.inner[i + s].d_true;
      smooth.push_back(acc / sub);
    }
    std::vector<double> rates;
    for (std::size_t i = 1; i < smooth.size(); ++i) rates.push_back((smooth[i] - smooth[i - 1]).norm() / h);
    m.empirical_lipschitz_max = *std::max_element(rates.begin(), rates.end());
    m.empirical_lipschitz_p99 = percentile(rates, 0.99);
    m.lipschitz_exceeded = m.empirical_lipschitz_p99 > cfg.ocp.lipschitz;
  }
  return out;
}

RunMetrics pool(const std::vector<EpisodeResult>& episodes) {
  RunMetrics p;
  if (episodes.empty()) return p;
  double pw = 0.0, sc = 0.0, safe = 0.0, dbar = 0.0, tube = 0.0, exc = 0.0, excc = 0.0;
  double p99 = 0.0;
  int tube_eps = 0;
  for (const auto& e : episodes) {
    const RunMetrics& m = e.metrics;
    pw += m.coverage_pointwise * m.pointwise_count;
    sc += m.coverage_score * m.score_count;
    safe += m.safe_fraction * m.safe_count;
    dbar += m.mean_d_bar * m.margin_count;
    exc += m.tube_exceed_rate * m.tube_checks;
    excc += m.tube_exceed_and_covered_rate * m.tube_checks;
    if (m.mean_tube > 0.0) {
      tube += m.mean_tube;
      ++tube_eps;
    }
    p.pointwise_count += m.pointwise_count;
    p.score_count += m.score_count;
    p.safe_count += m.safe_count;
    p.margin_count += m.margin_count;
    p.tube_checks += m.tube_checks;
    p.max_d_bar = std::max(p.max_d_bar, m.max_d_bar);
    p.violations += m.violations;
    p.episodes += m.episodes;
    p.goals_reached += m.goals_reached;
    p.plans += m.plans;
    p.infeasible_plans += m.infeasible_plans;
    p.hover_fallbacks += m.hover_fallbacks;
    p.empirical_lipschitz_max = std::max(p.empirical_lipschitz_max, m.empirical_lipschitz_max);
    p99 = std::max(p99, m.empirical_lipschitz_p99);
    p.lipschitz_exceeded = p.lipschitz_exceeded || m.lipschitz_exceeded;
    p.model_lipschitz_bound = std::max(p.model_lipschitz_bound, m.model_lipschitz_bound);
    p.max_theta_norm = std::max(p.max_theta_norm, m.max_theta_norm);
    if (m.aborted && !p.aborted) {
      p.aborted = true;
      p.abort_reason = m.abort_reason;
    }
  }
  p.empirical_lipschitz_p99 = p99;
  p.coverage_pointwise = p.pointwise_count ? pw / p.pointwise_count : 1.0;
  p.coverage_score = p.score_count ? sc / p.score_count : 1.0;
  p.safe_fraction = p.safe_count ? safe / p.safe_count : 1.0;
  p.mean_d_bar = p.margin_count ? dbar / p.margin_count : 0.0;
  p.mean_tube = tube_eps ? tube / tube_eps : 0.0;
  p.tube_exceed_rate = p.tube_checks ? exc / p.tube_checks : 0.0;
  p.tube_exceed_and_covered_rate = p.tube_checks ? excc / p.tube_checks : 0.0;
  p.goal_reached = p.goals_reached == p.episodes;
  p.goal_time = episodes.front().metrics.goal_time;
  return p;
}

RunResult run(const RunConfig& cfg, TrainingLog* training) {
  cfg.validate();
  RunResult result;
  result.bank = conformal::ThreadBank(cfg.ocp.threads(), cfg.ocp.q_init);
  std::int64_t global_step = 0;
  for (int e = 0; e < cfg.episodes; ++e) {
    result.episodes.push_back(run_episode(cfg, e, result.bank, global_step, training));
  }
  result.pooled = pool(result.episodes);
  if (!cfg.output_dir.empty()) write_outputs(cfg, result, cfg.output_dir);
  return result;
}

std::string trajectory_csv(const RunResult& result) {
  std::ostringstream os;
  os << "episode,t,x,y,z,vx,vy,vz,roll,pitch,p,q,thrust,theta_norm,d_true_norm,wind_x,wind_y,wind_z,violation\n";
  for (const auto& e : result.episodes) {
    for (const auto& r : e.inner) {
      os << r.episode << ',' << fmt(r.t);
      for (int i = 0; i < 8; ++i) os << ',' << fmt(r.x[i]);
      for (int i = 0; i < 3; ++i) os << ',' << fmt(r.u[i]);
      os << ',' << fmt(r.theta_norm) << ',' << fmt(r.d_true.norm());
      for (int i = 0; i < 3; ++i) os << ',' << fmt(r.wind[i]);
      os << ',' << (r.violation ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

std::string conformal_csv(const RunResult& result) {
  std::ostringstream os;
  os << "episode,k,global_k,t,j,score,q_tested,q_active,d_bar,case,covered_score,covered_pointwise,sup_d_true,"
        "feasible,fallback,cost,nominal_x,nominal_y,nominal_z,tube_pos0,tube_pos_max,tube_exceeded\n";
  for (const auto& e : result.episodes) {
    for (const auto& r : e.steps) {
      os << r.episode << ',' << r.k << ',' << r.global_k << ',' << fmt(r.t) << ',' << r.thread << ','
         << fmt_opt(r.score) << ',' << fmt_opt(r.q_tested) << ',' << fmt(r.q_active) << ',' << fmt(r.d_bar) << ','
         << conformal::to_string(r.margin_case) << ',' << fmt_opt(r.covered_score) << ','
         << fmt_opt(r.covered_pointwise) << ',' << fmt_opt(r.sup_d_true) << ',' << (r.feasible ? 1 : 0) << ','
         << r.fallback << ',' << fmt(r.cost) << ',' << fmt(r.nominal.x()) << ',' << fmt(r.nominal.y()) << ','
         << fmt(r.nominal.z()) << ',' << fmt(r.tube_pos0) << ',' << fmt(r.tube_pos_max) << ','
         << fmt_opt(r.tube_exceeded) << '\n';
    }
  }
  return os.str();
}

void write_outputs(const RunConfig& cfg, const RunResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = std::filesystem::path(dir);
  std::ofstream(path / "trajectory.csv") << trajectory_csv(result);
  std::ofstream(path / "conformal.csv") << conformal_csv(result);
  nlohmann::json j;
  j["metrics"] = to_json(result.pooled);
  j["episodes"] = nlohmann::json::array();
  for (const auto& e : result.episodes) j["episodes"].push_back(to_json(e.metrics));
  j["thread_bank"] = result.bank.to_json();
  j["config"] = to_json(cfg);
  std::ofstream(path / "metrics.json") << j.dump(2) << '\n';
}

model::MlpParams fit_prior(const model::MlpParams& base, const TrainingLog& data, double ridge) {
  using namespace model::layout;
  if (data.empty()) throw ConfigError("fit_prior: no training data");
  // Hidden features from the fixed layers: zero the output layer and read h3
  // through the Jacobian rows for W4.
  const int n = static_cast<int>(data.size());
  Eigen::MatrixXd phi(n, kHidden + 1);
  Eigen::MatrixXd y(n, kOutput);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd g = model::jacobian_transpose_times(base.theta, data[i].first, model::Accel::UnitX());
    for (int c = 0; c < kHidden; ++c) phi(i, c) = g[kW4 + c * kOutput];
    phi(i, kHidden) = 1.0;
    y.row(i) = data[i].second.transpose();
  }
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += ridge * n;
  const Eigen::MatrixXd w = gram.ldlt().solve(phi.transpose() * y);  // (kHidden + 1) x 3

  model::MlpParams out = base;
  for (int o = 0; o < kOutput; ++o) {
    for (int c = 0; c < kHidden; ++c) out.theta[kW4 + c * kOutput + o] = w(c, o);
    out.theta[kB4 + o] = w(kHidden, o);
  }
  const double norm = out.theta.norm();
  if (norm > model::kNormLimit) out.theta *= model::kNormLimit / norm;
  out.prior = out.theta;
  return out;
}

std::vector<SweepCell> expand_grid(const nlohmann::json& grid, const RunConfig& base) {
  auto list = [&](const char* key, double fallback) {
    if (!grid.contains(key)) return std::vector<double>{fallback};
    return grid.at(key).get<std::vector<double>>();
  };
  std::vector<double> alphas, etas, lds, lambdas;
  std::vector<bool> adapts;
  std::vector<std::uint64_t> seeds;
  try {
    alphas = list("alpha", base.ocp.alpha);
    etas = list("eta1", base.ocp.eta1);
    lds = list("lipschitz", base.ocp.lipschitz);
    lambdas = list("lambda_c", base.controller.lambda_c);
    adapts = grid.contains("adapt") ? grid.at("adapt").get<std::vector<bool>>() : std::vector<bool>{base.adapt_enabled};
    if (grid.contains("seeds")) {
      seeds = grid.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
      const int count = grid.value("seed_count", 1);
      for (int s = 0; s < count; ++s) seeds.push_back(base.seed + static_cast<std::uint64_t>(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep grid: ") + e.what());
  }
  std::vector<SweepCell> cells;
  for (double a : alphas)
    for (double e : etas)
      for (double l : lds)
        for (double lc : lambdas)
          for (bool ad : adapts)
            for (auto s : seeds) cells.push_back({a, e, l, lc, ad, s});
  return cells;
}

std::vector<SweepRow> sweep(const RunConfig& base, const std::vector<SweepCell>& cells, unsigned workers) {
  std::vector<SweepRow> rows(cells.size());
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(cells.size(), 1)));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      rows[i].cell = cells[i];
      try {
        RunConfig cfg = base;
        cfg.output_dir.clear();
        cfg.ocp.alpha = cells[i].alpha;
        cfg.ocp.eta1 = cells[i].eta1;
        cfg.ocp.lipschitz = cells[i].lipschitz;
        cfg.controller.lambda_c = cells[i].lambda_c;
        cfg.adapt_enabled = cells[i].adapt;
        cfg.seed = cells[i].seed;
        rows[i].metrics = run(cfg).pooled;
      } catch (const std::exception& e) {
        rows[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool_threads;
  for (unsigned w = 1; w < workers; ++w) pool_threads.emplace_back(work);
  work();
  for (auto& t : pool_threads) t.join();
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "alpha,eta1,lipschitz,lambda_c,adapt,seed,coverage_pointwise,coverage_score,score_count,mean_d_bar,"
        "max_d_bar,mean_tube,violations,goal_reached,infeasible_plans,plans,safe_fraction,error\n";
  for (const auto& r : rows) {
    os << fmt(r.cell.alpha) << ',' << fmt(r.cell.eta1) << ',' << fmt(r.cell.lipschitz) << ','
       << fmt(r.cell.lambda_c) << ',' << (r.cell.adapt ? 1 : 0) << ',' << r.cell.seed << ',';
    if (r.metrics) {
      const auto& m = *r.metrics;
      os << fmt(m.coverage_pointwise) << ',' << fmt(m.coverage_score) << ',' << m.score_count << ','
         << fmt(m.mean_d_bar) << ',' << fmt(m.max_d_bar) << ',' << fmt(m.mean_tube) << ',' << m.violations << ','
         << (m.goal_reached ? 1 : 0) << ',' << m.infeasible_plans << ',' << m.plans << ',' << fmt(m.safe_fraction)
         << ',';
    } else {
      os << ",,,,,,,,,,,";
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << err << '\n';
  }
  return os.str();
}

}  // namespace siocp::harness

#include "siocp/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "siocp/errors.hpp"

namespace siocp {

namespace {

bool integral_ratio(double a, double b) {
  const double r = a / b;
  return std::abs(r - std::round(r)) < 1e-9 * std::max(1.0, r) && std::round(r) >= 1.0;
}

Eigen::Vector3d vec3(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

nlohmann::json to_array(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

model::MlpParams PriorSpec::materialize() const {
  switch (kind) {
    case PriorKind::Zero:
      return model::MlpParams::zeros();
    case PriorKind::Random:
      return model::MlpParams::random(seed, scale);
    case PriorKind::File: {
      model::MlpParams p = model::load(path);
      p.theta = p.prior;
      return p;
    }
  }
  return model::MlpParams::zeros();
}

void RunConfig::validate() const {
  scenario.validate();
  ocp.validate();
  plant.validate();
  controller.validate();
  if (!(grid_dt > 0.0)) throw ConfigError("grid_dt must be positive");
  if (std::abs(controller.dt - ocp.dt) > 1e-12) throw ConfigError("controller dt and ocp dt differ");
  if (static_cast<std::size_t>(controller.horizon_steps) != ocp.threads()) {
    throw ConfigError("controller horizon steps must equal horizon / dt");
  }
  if (!integral_ratio(ocp.dt, grid_dt)) throw ConfigError("dt must be an integer multiple of grid_dt");
  if (std::abs(adapt.dt - grid_dt) > 1e-12) throw ConfigError("adaptation dt must equal grid_dt");
  if (!(adapt.gamma > 0.0) || !(adapt.lambda >= 0.0)) throw ConfigError("adaptation needs gamma > 0, lambda >= 0");
  if (!integral_ratio(scenario.duration, ocp.dt)) throw ConfigError("duration must be a multiple of dt");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (std::abs(controller.bounds.max_thrust) < 1e-9) throw ConfigError("max thrust must be positive");
}

int RunConfig::steps_per_episode() const {
  return static_cast<int>(std::llround(scenario.duration / ocp.dt));
}

int RunConfig::substeps() const { return static_cast<int>(std::llround(ocp.dt / grid_dt)); }

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["scenario"] = control::to_json(cfg.scenario);
  j["controller"] = control::to_json(cfg.controller);
  j["ocp"] = {{"alpha", cfg.ocp.alpha},
              {"schedule", cfg.ocp.schedule == conformal::StepSchedule::Constant ? "constant" : "inverse_sqrt"},
              {"eta1", cfg.ocp.eta1},
              {"q_init", cfg.ocp.q_init},
              {"d_init", cfg.ocp.d_init},
              {"lipschitz", cfg.ocp.lipschitz},
              {"horizon", cfg.ocp.horizon},
              {"dt", cfg.ocp.dt}};
  j["adapt"] = {{"gamma", cfg.adapt.gamma}, {"lambda", cfg.adapt.lambda}};
  j["plant"] = {{"mass", cfg.plant.mass},
                {"gravity", cfg.plant.gravity},
                {"drag_body", to_array(cfg.plant.drag_body)},
                {"noise_sigma", to_array(cfg.plant.noise_sigma)},
                {"wind_enabled", cfg.plant.wind_enabled},
                {"drag_enabled", cfg.plant.drag_enabled},
                {"noise_enabled", cfg.plant.noise_enabled},
                {"wind_time_offset", cfg.plant.wind_time_offset}};
  nlohmann::json prior;
  switch (cfg.prior.kind) {
    case PriorKind::Random:
      prior = {{"kind", "random"}, {"seed", cfg.prior.seed}, {"scale", cfg.prior.scale}};
      break;
    case PriorKind::Zero:
      prior = {{"kind", "zero"}};
      break;
    case PriorKind::File:
      prior = {{"kind", "file"}, {"path", cfg.prior.path}};
      break;
  }
  j["prior"] = prior;
  j["grid_dt"] = cfg.grid_dt;
  j["seed"] = cfg.seed;
  j["adapt_enabled"] = cfg.adapt_enabled;
  j["episodes"] = cfg.episodes;
  j["randomize_wind_phase"] = cfg.randomize_wind_phase;
  j["wind_phase_range"] = cfg.wind_phase_range;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, const std::string& base_dir) {
  RunConfig cfg;
  try {
    if (j.contains("scenario")) cfg.scenario = control::scenario_from_json(j["scenario"]);
    if (j.contains("controller")) cfg.controller = control::controller_from_json(j["controller"]);
    if (j.contains("ocp")) {
      const auto& o = j["ocp"];
      cfg.ocp.alpha = o.value("alpha", cfg.ocp.alpha);
      const std::string schedule = o.value("schedule", std::string("constant"));
      if (schedule == "constant") {
        cfg.ocp.schedule = conformal::StepSchedule::Constant;
      } else if (schedule == "inverse_sqrt") {
        cfg.ocp.schedule = conformal::StepSchedule::InverseSqrt;
      } else {
        throw ConfigError("ocp.schedule must be 'constant' or 'inverse_sqrt'");
      }
      cfg.ocp.eta1 = o.value("eta1", cfg.ocp.eta1);
      cfg.ocp.q_init = o.value("q_init", cfg.ocp.q_init);
      cfg.ocp.d_init = o.value("d_init", cfg.ocp.d_init);
      cfg.ocp.lipschitz = o.value("lipschitz", cfg.ocp.lipschitz);
      cfg.ocp.horizon = o.value("horizon", cfg.ocp.horizon);
      cfg.ocp.dt = o.value("dt", cfg.ocp.dt);
    }
    cfg.grid_dt = j.value("grid_dt", cfg.grid_dt);
    cfg.adapt.dt = cfg.grid_dt;
    if (j.contains("adapt")) {
      cfg.adapt.gamma = j["adapt"].value("gamma", cfg.adapt.gamma);
      cfg.adapt.lambda = j["adapt"].value("lambda", cfg.adapt.lambda);
    }
    if (j.contains("plant")) {
      const auto& p = j["plant"];
      cfg.plant.mass = p.value("mass", cfg.plant.mass);
      cfg.plant.gravity = p.value("gravity", cfg.plant.gravity);
      if (p.contains("drag_body")) cfg.plant.drag_body = vec3(p["drag_body"]);
      if (p.contains("noise_sigma")) cfg.plant.noise_sigma = vec3(p["noise_sigma"]);
      cfg.plant.wind_enabled = p.value("wind_enabled", cfg.plant.wind_enabled);
      cfg.plant.drag_enabled = p.value("drag_enabled", cfg.plant.drag_enabled);
      cfg.plant.noise_enabled = p.value("noise_enabled", cfg.plant.noise_enabled);
      cfg.plant.wind_time_offset = p.value("wind_time_offset", cfg.plant.wind_time_offset);
    }
    if (j.contains("prior")) {
      const auto& p = j["prior"];
      const std::string kind = p.value("kind", std::string("random"));
      if (kind == "random") {
        cfg.prior.kind = PriorKind::Random;
        cfg.prior.seed = p.value("seed", cfg.prior.seed);
        cfg.prior.scale = p.value("scale", cfg.prior.scale);
      } else if (kind == "zero") {
        cfg.prior.kind = PriorKind::Zero;
      } else if (kind == "file") {
        cfg.prior.kind = PriorKind::File;
        std::filesystem::path path = p.at("path").get<std::string>();
        if (path.is_relative()) path = std::filesystem::path(base_dir) / path;
        cfg.prior.path = path.lexically_normal().string();
      } else {
        throw ConfigError("prior.kind must be random, zero or file");
      }
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.adapt_enabled = j.value("adapt_enabled", cfg.adapt_enabled);
    cfg.episodes = j.value("episodes", cfg.episodes);
    cfg.randomize_wind_phase = j.value("randomize_wind_phase", cfg.randomize_wind_phase);
    cfg.wind_phase_range = j.value("wind_phase_range", cfg.wind_phase_range);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return run_config_from_json(j, dir.empty() ? "." : dir.string());
}

}  // namespace siocp

#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "siocp/conformal.hpp"
#include "siocp/controller.hpp"
#include "siocp/model.hpp"
#include "siocp/plant.hpp"

namespace siocp {

enum class PriorKind { Random, Zero, File };

struct PriorSpec {
  PriorKind kind = PriorKind::Random;
  std::uint64_t seed = 7;
  double scale = 0.1;
  std::string path;  // resolved against the config file directory

  model::MlpParams materialize() const;
};

struct RunConfig {
  control::Scenario scenario = control::Scenario::corridor_default();
  conformal::OcpConfig ocp;
  model::AdaptConfig adapt;
  plant::WindDragConfig plant;
  control::ControllerConfig controller;
  PriorSpec prior;

  double grid_dt = 0.01;  // inner simulation / history / adaptation step [s]
  std::uint64_t seed = 0;
  bool adapt_enabled = true;
  int episodes = 1;
  bool randomize_wind_phase = false;  // episodes after the first are always re-randomized
  double wind_phase_range = 60.0;     // [s]
  std::string output_dir;

  /// Cross-module consistency: dt, horizon and thread count agree everywhere.
  void validate() const;
  int steps_per_episode() const;
  int substeps() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults. Relative prior paths resolve against base_dir.
RunConfig run_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

}  // namespace siocp

#pragma once

// Closed-loop episode runner: plant, online adaptation, history stack,
// staggered conformal updates, margin synthesis, tube planning and logging.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "siocp/config.hpp"

namespace siocp::harness {

/// Per controller step.
struct StepRecord {
  int episode = 0;
  int k = 0;                 // step within the episode
  std::int64_t global_k = 0; // step index seen by the thread bank
  double t = 0.0;
  std::size_t thread = 0;
  std::optional<double> score;        // S_k, once the history is full
  std::optional<double> q_tested;     // threshold S_k was compared against
  double q_active = 0.0;              // threshold issued for [t_k, t_k + T_p]
  conformal::MarginCase margin_case = conformal::MarginCase::InitialPhase;
  double d_bar = 0.0;
  // Retrospective labels, filled once the window [t_k, t_k + T_p] has elapsed.
  std::optional<bool> covered_score;
  std::optional<bool> covered_pointwise;
  std::optional<double> sup_d_true;
  bool feasible = false;
  std::string fallback;  // "", "tail" or "hover"
  double cost = 0.0;
  Eigen::Vector3d nominal = Eigen::Vector3d::Zero();
  double tube_pos0 = 0.0;
  double tube_pos_max = 0.0;
  std::optional<bool> tube_exceeded;
};

/// Per inner simulation step.
struct InnerRecord {
  int episode = 0;
  double t = 0.0;
  plant::State x;
  plant::Input u;
  double theta_norm = 0.0;
  Eigen::Vector3d d_true = Eigen::Vector3d::Zero();  // Delta_v / m - F_nn at the step midpoint
  Eigen::Vector3d wind = Eigen::Vector3d::Zero();
  bool violation = false;
};

struct RunMetrics {
  double coverage_pointwise = 1.0;
  int pointwise_count = 0;
  double coverage_score = 1.0;
  int score_count = 0;
  double mean_d_bar = 0.0;  // over steps with a conformal margin
  double max_d_bar = 0.0;
  int margin_count = 0;
  double mean_tube = 0.0;   // position tube radius of feasible plans
  int violations = 0;       // inner steps with the true position unsafe
  double safe_fraction = 1.0;
  int safe_count = 0;
  int episodes = 0;
  int goals_reached = 0;
  bool goal_reached = false;
  double goal_time = -1.0;
  int plans = 0;
  int infeasible_plans = 0;
  int hover_fallbacks = 0;
  double tube_exceed_rate = 0.0;
  double tube_exceed_and_covered_rate = 0.0;
  int tube_checks = 0;
  double empirical_lipschitz_max = 0.0;
  double empirical_lipschitz_p99 = 0.0;
  bool lipschitz_exceeded = false;
  double model_lipschitz_bound = 0.0;
  double max_theta_norm = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

nlohmann::json to_json(const RunMetrics& m);

struct EpisodeResult {
  RunMetrics metrics;
  std::vector<StepRecord> steps;
  std::vector<InnerRecord> inner;
};

/// (features, residual acceleration target) pairs for offline prior fitting.
using TrainingLog = std::vector<std::pair<model::Features, model::Accel>>;

struct RunResult {
  RunMetrics pooled;
  std::vector<EpisodeResult> episodes;
  conformal::ThreadBank bank;
};

/// Runs one episode. The thread bank and global step counter persist across
/// calls so looped episodes accumulate long-run statistics.
EpisodeResult run_episode(const RunConfig& cfg, int episode, conformal::ThreadBank& bank,
                          std::int64_t& global_step, TrainingLog* training = nullptr);

/// All configured episodes with a shared thread bank, pooled metrics.
/// Writes trajectory.csv, conformal.csv and metrics.json if cfg.output_dir is set.
RunResult run(const RunConfig& cfg, TrainingLog* training = nullptr);

RunMetrics pool(const std::vector<EpisodeResult>& episodes);

void write_outputs(const RunConfig& cfg, const RunResult& result, const std::string& dir);
std::string trajectory_csv(const RunResult& result);
std::string conformal_csv(const RunResult& result);

/// Ridge fit of the output layer on logged pairs, hidden layers kept from
/// `base`. The result is projected onto the parameter norm ball.
model::MlpParams fit_prior(const model::MlpParams& base, const TrainingLog& data, double ridge = 1e-3);

struct SweepCell {
  double alpha = 0.1;
  double eta1 = 0.05;
  double lipschitz = 1.0;
  double lambda_c = 2.0;
  bool adapt = true;
  std::uint64_t seed = 0;
};

struct SweepRow {
  SweepCell cell;
  std::optional<RunMetrics> metrics;
  std::string error;
};

/// Expands a grid description into cells. Keys: alpha, eta1, lipschitz,
/// lambda_c, adapt (arrays) and seeds (array) or seed_count.
std::vector<SweepCell> expand_grid(const nlohmann::json& grid, const RunConfig& base);
std::vector<SweepRow> sweep(const RunConfig& base, const std::vector<SweepCell>& cells, unsigned workers = 0);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace siocp::harness

#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "siocp/config.hpp"
#include "siocp/errors.hpp"
#include "siocp/harness.hpp"

using namespace siocp;
using namespace siocp::harness;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.scenario.duration = 2.0;
  cfg.controller.population = 64;
  cfg.controller.elites = 8;
  cfg.controller.iterations = 3;
  return cfg;
}

RunConfig quiet_config() {
  RunConfig cfg = small_config();
  cfg.plant.wind_enabled = false;
  cfg.plant.drag_enabled = false;
  cfg.plant.noise_enabled = false;
  cfg.adapt_enabled = false;
  cfg.prior.kind = PriorKind::Zero;
  cfg.ocp.q_init = 0.5;
  return cfg;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("zero-disturbance run: null scores, collapsing margins, full coverage") {
  const RunConfig cfg = quiet_config();
  const RunResult result = run(cfg);
  const auto& steps = result.episodes.at(0).steps;
  const int p = static_cast<int>(cfg.ocp.threads());
  REQUIRE(steps.size() == static_cast<std::size_t>(cfg.steps_per_episode()));
  // Only the trapezoid rule's disagreement with the RK4 plant remains.
  for (const auto& s : steps) {
    if (s.score) CHECK(*s.score <= 1e-3);
  }
  // Each thread update with a zero score lowers the threshold by eta * alpha.
  for (std::size_t k = static_cast<std::size_t>(p); k < steps.size(); ++k) {
    const double expected = *steps[k].q_tested - cfg.ocp.eta1 * cfg.ocp.alpha;
    CHECK(steps[k].q_active == doctest::Approx(expected).epsilon(1e-12));
    CHECK(steps[k].d_bar <= steps[k - static_cast<std::size_t>(p)].d_bar + 1e-12);
  }
  CHECK(result.pooled.coverage_pointwise == 1.0);
  CHECK(result.pooled.coverage_score == 1.0);
  CHECK(result.pooled.violations == 0);
  CHECK_FALSE(result.pooled.aborted);
}

TEST_CASE("replays are deterministic") {
  RunConfig cfg = small_config();
  cfg.seed = 3;
  const RunResult a = run(cfg);
  const RunResult b = run(cfg);
  CHECK(trajectory_csv(a) == trajectory_csv(b));
  CHECK(conformal_csv(a) == conformal_csv(b));
  CHECK(to_json(a.pooled) == to_json(b.pooled));
}

TEST_CASE("score bookkeeping: thread k mod P, tested against the threshold issued P steps earlier") {
  RunConfig cfg = small_config();
  cfg.episodes = 2;
  const RunResult result = run(cfg);
  const std::size_t p = cfg.ocp.threads();
  std::int64_t expected_global = 0;
  for (const auto& e : result.episodes) {
    const auto& steps = e.steps;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      CHECK(steps[k].global_k == expected_global++);
      CHECK(steps[k].thread == static_cast<std::size_t>(steps[k].global_k % static_cast<std::int64_t>(p)));
      CHECK(steps[k].score.has_value() == (k >= p));
      if (k >= 2 * p) {
        CHECK(*steps[k].q_tested == steps[k - p].q_active);
        REQUIRE(steps[k - p].covered_score.has_value());
        CHECK(*steps[k - p].covered_score == (*steps[k].score <= *steps[k].q_tested));
      }
    }
  }
  // Counts per thread add up to the scored steps of both episodes.
  std::int64_t total = 0;
  for (auto c : result.bank.update_counts()) total += c;
  CHECK(total == 2 * (cfg.steps_per_episode() - static_cast<std::int64_t>(p)));
}

TEST_CASE("a single-cell sweep reproduces run") {
  RunConfig cfg = small_config();
  cfg.seed = 4;
  const auto cells = expand_grid(nlohmann::json::object(), cfg);
  REQUIRE(cells.size() == 1);
  const auto rows = sweep(cfg, cells, 1);
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].metrics.has_value());
  CHECK(to_json(*rows[0].metrics) == to_json(run(cfg).pooled));
  const std::string csv = sweep_csv(rows);
  CHECK(first_line(csv).rfind("alpha,eta1,lipschitz,lambda_c,adapt,seed,", 0) == 0);
}

TEST_CASE("grid expansion") {
  const RunConfig base;
  const auto cells = expand_grid(nlohmann::json{{"alpha", {0.05, 0.1, 0.2}}, {"adapt", {true, false}},
                                                {"seed_count", 4}},
                                 base);
  CHECK(cells.size() == 24);
}

TEST_CASE("inconsistent configurations are rejected") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  RunConfig bad = cfg;
  bad.ocp.dt = 0.04;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.grid_dt = 0.03;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.episodes = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"ocp", {{"alpha", 2.0}}}}), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config JSON round trip") {
  RunConfig cfg;
  cfg.ocp.alpha = 0.2;
  cfg.controller.lambda_c = 3.0;
  cfg.seed = 42;
  const RunConfig back = run_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
}

TEST_CASE("output files and headers") {
  RunConfig cfg = quiet_config();
  const auto dir = std::filesystem::temp_directory_path() / "siocp_harness_outputs";
  std::filesystem::remove_all(dir);
  cfg.output_dir = dir.string();
  run(cfg);
  CHECK(first_line(read_file(dir / "trajectory.csv")) ==
        "episode,t,x,y,z,vx,vy,vz,roll,pitch,p,q,thrust,theta_norm,d_true_norm,wind_x,wind_y,wind_z,violation");
  CHECK(first_line(read_file(dir / "conformal.csv")) ==
        "episode,k,global_k,t,j,score,q_tested,q_active,d_bar,case,covered_score,covered_pointwise,sup_d_true,"
        "feasible,fallback,cost,nominal_x,nominal_y,nominal_z,tube_pos0,tube_pos_max,tube_exceeded");
  const nlohmann::json metrics = nlohmann::json::parse(read_file(dir / "metrics.json"));
  CHECK(metrics.contains("metrics"));
  CHECK(metrics.contains("episodes"));
  CHECK(metrics.contains("thread_bank"));
  CHECK(metrics.contains("config"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("prior fitting on logged residuals reduces the training error") {
  RunConfig cfg = small_config();
  cfg.adapt_enabled = false;
  TrainingLog log;
  run(cfg, &log);
  REQUIRE(log.size() > 100);
  const model::MlpParams base = cfg.prior.materialize();
  const model::MlpParams fitted = fit_prior(base, log);
  double before = 0.0;
  double after = 0.0;
  for (const auto& [xi, target] : log) {
    before += (target - model::forward(base.theta, xi)).squaredNorm();
    after += (target - model::forward(fitted.theta, xi)).squaredNorm();
  }
  CHECK(after < before);
  CHECK(fitted.theta.norm() <= model::kNormLimit * (1.0 + 1e-12));
  CHECK(fitted.theta == fitted.prior);
}

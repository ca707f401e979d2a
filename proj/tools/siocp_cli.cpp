// Command-line front end: closed-loop runs, property suites, parameter
// sweeps and offline prior fitting.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "siocp/config.hpp"
#include "siocp/errors.hpp"
#include "siocp/harness.hpp"
#include "siocp/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPropertyFailure = 1;
constexpr int kExitConfigError = 2;

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw siocp::ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw siocp::ConfigError(path + ": " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw siocp::ConfigError("cannot write " + path.string());
  out << content;
}

siocp::RunConfig load_with_overrides(const std::string& config, bool no_adapt, std::optional<std::uint64_t> seed,
                                     std::optional<int> episodes, const std::string& out_dir) {
  siocp::RunConfig cfg = siocp::load_run_config(config);
  if (no_adapt) cfg.adapt_enabled = false;
  if (seed) cfg.seed = *seed;
  if (episodes) cfg.episodes = *episodes;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (cfg.output_dir.empty()) cfg.output_dir = "out";
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-improving online conformal safety margins for adaptive tube MPC"};
  app.require_subcommand(1);

  std::string config;
  std::string out_dir;
  bool no_adapt = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;

  auto* run = app.add_subcommand("run", "Run closed-loop episodes and write trajectory.csv, conformal.csv, metrics.json");
  run->add_option("--config", config, "Run configuration (JSON)")->required();
  run->add_flag("--no-adapt", no_adapt, "Freeze the model at its prior");
  run->add_option("--seed", seed, "Override the run seed");
  run->add_option("--episodes", episodes, "Override the number of looped episodes");
  run->add_option("--out", out_dir, "Output directory (default: output_dir from the config, else ./out)");

  std::string suite;
  std::string report_path;
  auto* verify = app.add_subcommand("verify", "Run a property suite and print a JSON report");
  verify->add_option("--suite", suite, "Suite name or 'all'")->required();
  verify->add_option("--report", report_path, "Also write the report to this file");

  std::string grid;
  std::string sweep_out = "sweep.csv";
  unsigned workers = 0;
  auto* sweep = app.add_subcommand("sweep", "Run a parameter grid and aggregate metrics into one CSV");
  sweep->add_option("--grid", grid, "Grid description (JSON)")->required();
  sweep->add_option("--config", config, "Base run configuration (default: built-in corridor scenario)");
  sweep->add_option("--out", sweep_out, "Output CSV path");
  sweep->add_option("--workers", workers, "Worker threads (default: hardware concurrency)");

  std::string prior_out = "prior.json";
  bool pretrain_adapt = false;
  auto* pretrain = app.add_subcommand("pretrain", "Fit a prior from logged residuals of a data-collection run");
  pretrain->add_option("--config", config, "Run configuration used for data collection")->required();
  pretrain->add_option("--episodes", episodes, "Data-collection episodes");
  pretrain->add_option("--seed", seed, "Override the run seed");
  pretrain->add_flag("--adapt", pretrain_adapt, "Collect data with adaptation enabled");
  pretrain->add_option("--out", prior_out, "Output parameter file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const siocp::RunConfig cfg = load_with_overrides(config, no_adapt, seed, episodes, out_dir);
      const siocp::harness::RunResult result = siocp::harness::run(cfg);
      std::cout << siocp::harness::to_json(result.pooled).dump(2) << '\n';
      std::cerr << "outputs written to " << cfg.output_dir << '\n';
      return kExitOk;
    }
    if (*verify) {
      std::vector<std::string> names = suite == "all" ? siocp::verify::suite_names() : std::vector<std::string>{suite};
      nlohmann::json reports = nlohmann::json::array();
      bool passed = true;
      for (const auto& name : names) {
        const siocp::verify::Report r = siocp::verify::run_suite(name);
        passed = passed && r.passed;
        reports.push_back(siocp::verify::to_json(r));
      }
      const nlohmann::json out = names.size() == 1 ? reports[0] : reports;
      std::cout << out.dump(2) << '\n';
      if (!report_path.empty()) write_file(report_path, out.dump(2) + "\n");
      return passed ? kExitOk : kExitPropertyFailure;
    }
    if (*sweep) {
      siocp::RunConfig base = config.empty() ? siocp::RunConfig{} : siocp::load_run_config(config);
      base.output_dir.clear();
      base.validate();
      const auto cells = siocp::harness::expand_grid(read_json(grid), base);
      const auto rows = siocp::harness::sweep(base, cells, workers);
      write_file(sweep_out, siocp::harness::sweep_csv(rows));
      int failed = 0;
      for (const auto& r : rows) failed += r.metrics ? 0 : 1;
      std::cerr << rows.size() << " cells, " << failed << " failed, written to " << sweep_out << '\n';
      return kExitOk;
    }
    if (*pretrain) {
      siocp::RunConfig cfg = siocp::load_run_config(config);
      cfg.adapt_enabled = pretrain_adapt;
      cfg.randomize_wind_phase = true;
      cfg.output_dir.clear();
      if (seed) cfg.seed = *seed;
      if (episodes) cfg.episodes = *episodes;
      cfg.validate();
      siocp::harness::TrainingLog log;
      siocp::harness::run(cfg, &log);
      const siocp::model::MlpParams fitted = siocp::harness::fit_prior(cfg.prior.materialize(), log);
      siocp::model::save(fitted, prior_out);
      std::cerr << "fitted on " << log.size() << " samples, written to " << prior_out << '\n';
      return kExitOk;
    }
  } catch (const siocp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPropertyFailure;
  }
  return kExitOk;
}

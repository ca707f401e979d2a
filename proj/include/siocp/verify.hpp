#pragma once

// Seeded property suites over every module, runnable from the CLI.

#include <string>
#include <vector>

#include <json.hpp>

namespace siocp::verify {

struct Report {
  std::string suite;
  bool passed = true;
  long long checks = 0;
  nlohmann::json details = nlohmann::json::object();
  nlohmann::json counterexample;  // null when passed
};

std::vector<std::string> suite_names();

/// Throws ConfigError for an unknown suite name.
Report run_suite(const std::string& name);

Report conformal_bounds(int streams = 100, int length = 10000);
Report margin_soundness(int trajectories = 100000);
Report score_oracle(int windows = 1000);
Report jacobian_check(int points = 100);
Report plant_convergence();
Report controller_monotonicity();

nlohmann::json to_json(const Report& r);

}  // namespace siocp::verify

// Acceptance suite: one line per primary criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "siocp/config.hpp"
#include "siocp/conformal.hpp"
#include "siocp/harness.hpp"
#include "siocp/verify.hpp"

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& measured) {
  std::printf("criterion %2d %s  %s | %s\n", id, pass ? "PASS" : "FAIL", what.c_str(), measured.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

siocp::RunConfig corridor_config() {
  siocp::RunConfig cfg = siocp::load_run_config(std::string(SIOCP_SOURCE_DIR) + "/scenarios/corridor.json");
  cfg.output_dir.clear();
  cfg.episodes = 1;
  return cfg;
}

}  // namespace

int main() {
  using namespace siocp;

  {
    const auto t0 = Clock::now();
    const verify::Report r = verify::conformal_bounds(100, 10000);
    const double secs = seconds_since(t0);
    report(1, r.passed && secs < 10.0, "coverage error <= (B+eta)/(eta K) on 100 adversarial streams, K <= 1e4",
           format("checks=%lld worst error/bound=%.4f time=%.2fs", r.checks,
                  r.details["worst_error_over_bound"].get<double>(), secs));
  }

  {
    const auto t0 = Clock::now();
    RunConfig cfg = corridor_config();
    cfg.episodes = 26;
    const harness::RunResult result = harness::run(cfg);
    const harness::RunMetrics& m = result.pooled;
    const bool pass = m.score_count >= 2000 && m.coverage_score >= 0.87 && m.coverage_score <= 0.97;
    report(2, pass, "looped corridor scenario, alpha=0.1: pooled score coverage in [0.87, 0.97] over >= 2000 updates",
           format("episodes=%d updates=%d coverage_score=%.4f time=%.1fs", cfg.episodes, m.score_count,
                  m.coverage_score, seconds_since(t0)));
  }

  {
    const auto t0 = Clock::now();
    const verify::Report r = verify::margin_soundness(100000);
    const double secs = seconds_since(t0);
    const auto sqrt_cases = r.details["sqrt_cases"].get<long long>();
    const auto trap_cases = r.details["trapezoid_cases"].get<long long>();
    const auto violations = r.details["violations"].get<long long>();
    const bool pass = r.passed && violations == 0 && sqrt_cases >= 10000 && trap_cases >= 10000 && secs < 60.0;
    report(3, pass, "margin soundness over 1e5 Lipschitz oracle trajectories, both cases >= 1e4",
           format("violations=%lld sqrt=%lld trapezoid=%lld min(margin-sup)=%.3g time=%.1fs",
                  violations, sqrt_cases, trap_cases, r.details["min_margin_minus_sup"].get<double>(), secs));
  }

  {
    conformal::OcpConfig cfg;
    cfg.lipschitz = 1.0;
    cfg.horizon = 0.5;
    const auto a = conformal::margin_from_threshold(0.1, cfg);
    const auto b = conformal::margin_from_threshold(0.2, cfg);
    const auto c = conformal::margin_from_threshold(0.125, cfg);
    const double boundary = 0.5 * cfg.lipschitz * cfg.horizon * cfg.horizon;
    const double sqrt_branch = std::sqrt(2.0 * cfg.lipschitz * boundary);
    const double trap_branch = boundary / cfg.horizon + 0.5 * cfg.lipschitz * cfg.horizon;
    const double e1 = std::abs(a.d_bar - std::sqrt(0.2));
    const double e2 = std::abs(b.d_bar - 0.65);
    const double e3 = std::abs(c.d_bar - 0.5);
    const double e4 = std::abs(sqrt_branch - trap_branch);
    const bool cases = a.margin_case == conformal::MarginCase::SqrtCase &&
                       b.margin_case == conformal::MarginCase::TrapezoidCase;
    const bool pass = cases && e1 <= 1e-12 && e2 <= 1e-12 && e3 <= 1e-12 && e4 <= 1e-12;
    report(4, pass, "margin examples q=0.1, 0.2, 0.125 (L=1, T=0.5) and continuity at q=L T^2/2",
           format("errors=%.2g %.2g %.2g continuity=%.2g", e1, e2, e3, e4));
  }

  {
    const auto t0 = Clock::now();
    const int seeds = 20;
    int off_larger = 0;
    int on_good = 0;
    long long hits[2] = {0, 0};
    long long counts[2] = {0, 0};
    double first_pw[2] = {0.0, 0.0};
    for (int s = 0; s < seeds; ++s) {
      double d_bar[2] = {0.0, 0.0};
      for (int mode = 0; mode < 2; ++mode) {
        RunConfig cfg = corridor_config();
        cfg.seed = static_cast<std::uint64_t>(s);
        cfg.adapt_enabled = mode == 1;
        const harness::RunMetrics m = harness::run(cfg).pooled;
        d_bar[mode] = m.mean_d_bar;
        hits[mode] += std::llround(m.coverage_pointwise * m.pointwise_count);
        counts[mode] += m.pointwise_count;
        if (s == 0) first_pw[mode] = m.coverage_pointwise;
        if (mode == 1 && m.goal_reached && m.violations == 0 && !m.aborted) ++on_good;
      }
      off_larger += d_bar[0] > d_bar[1] ? 1 : 0;
    }
    const double pooled_off = static_cast<double>(hits[0]) / static_cast<double>(counts[0]);
    const double pooled_on = static_cast<double>(hits[1]) / static_cast<double>(counts[1]);
    const double secs = seconds_since(t0);
    report(5, first_pw[1] >= 0.90 && first_pw[0] >= 0.90 && pooled_on >= 0.90 && pooled_off >= 0.90,
           "corridor run pointwise coverage >= 0.90 with adaptation on and off (seed 0 and pooled over 20 seeds)",
           format("seed0 on=%.4f off=%.4f pooled on=%.4f off=%.4f", first_pw[1], first_pw[0], pooled_on,
                  pooled_off));
    report(6, off_larger >= 18 && on_good >= 18,
           "20 seed pairs: mean d_bar off > on in >= 90%, adaptation-on goal with zero violations in >= 90%",
           format("off>on=%d/20 on goal&safe=%d/20 time=%.1fs", off_larger, on_good, secs));
  }

  {
    const auto t0 = Clock::now();
    const verify::Report r = verify::jacobian_check(100);
    report(7, r.passed, "Jacobian vs central differences at 100 kink-free points, max relative error <= 1e-4",
           format("max relative error=%.3g time=%.1fs", r.details["max_relative_error"].get<double>(),
                  seconds_since(t0)));
  }

  {
    const verify::Report r = verify::plant_convergence();
    report(8, r.passed, "RK4 step-halving on the noiseless plant, observed order >= 3.8",
           format("min observed order=%.3f", r.details["min_order"].get<double>()));
  }

  {
    const auto t0 = Clock::now();
    const verify::Report r = verify::score_oracle(1000);
    report(9, r.passed, "integral score equals the brute-force pair oracle to 1e-12 on 1000 windows",
           format("max abs error=%.3g time=%.1fs", r.details["max_abs_error"].get<double>(), seconds_since(t0)));
  }

  std::printf("criterion 10 SKIP  plot cross-check belongs to the secondary plotting component (not built)\n");
  std::printf("%s: %d failing primary criteria\n", failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
              failures);
  return failures == 0 ? 0 : 1;
}

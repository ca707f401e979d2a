#include <cmath>
#include <random>

#include <doctest.h>

#include "siocp/conformal.hpp"
#include "siocp/errors.hpp"
#include "siocp/history.hpp"
#include "siocp/oracle.hpp"

using namespace siocp;
using namespace siocp::history;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// f_nom(x, u, theta) = u, so the input carries the nominal derivative.
Eigen::VectorXd input_passthrough(const Eigen::VectorXd&, const Eigen::VectorXd& u, const Eigen::VectorXd&) {
  return u;
}

Eigen::VectorXd zero_dynamics(const Eigen::VectorXd& x, const Eigen::VectorXd&, const Eigen::VectorXd&) {
  return Eigen::VectorXd::Zero(x.size());
}

// Fills a stack on [t0, t0 + window] with x(t) and u(t) from callables.
template <typename X, typename U>
HistoryStack fill(double window, double grid_dt, double t0, X x_of, U u_of) {
  HistoryStack stack(window, grid_dt);
  for (std::size_t i = 0; i < stack.capacity(); ++i) {
    const double t = t0 + static_cast<double>(i) * grid_dt;
    stack.push(t, x_of(t), u_of(t), Eigen::VectorXd::Zero(1));
  }
  return stack;
}

}  // namespace

TEST_CASE("push grows, evicts and rejects repeated timestamps") {
  HistoryStack stack(0.5, 0.01);
  CHECK(stack.capacity() == 51);
  stack.push(0.0, vec({0.0}), vec({0.0}), vec({0.0}));
  CHECK(stack.size() == 1);
  for (int i = 1; i < 51; ++i) stack.push(0.01 * i, vec({1.0 * i}), vec({0.0}), vec({0.0}));
  CHECK(stack.full());
  stack.push(0.51, vec({51.0}), vec({0.0}), vec({0.0}));
  CHECK(stack.size() == 51);
  CHECK(stack.samples().front().x[0] == 1.0);
  CHECK_THROWS_AS(stack.push(0.51, vec({0.0}), vec({0.0}), vec({0.0})), SequencingError);
  CHECK_THROWS_AS(stack.push(0.53, vec({0.0}), vec({0.0}), vec({0.0})), SequencingError);
  CHECK_THROWS_AS(stack.push(0.50, vec({0.0}), vec({0.0}), vec({0.0})), SequencingError);
  CHECK_THROWS_AS(stack.push(0.52, vec({0.0, 1.0}), vec({0.0}), vec({0.0})), DataIntegrityError);
  CHECK_NOTHROW(stack.push(0.52, vec({0.0}), vec({0.0}), vec({0.0})));
}

TEST_CASE("stack construction rejects a window that is not a grid multiple") {
  CHECK_THROWS_AS(HistoryStack(0.505, 0.01), ConfigError);
  CHECK_THROWS_AS(HistoryStack(0.5, 0.0), ConfigError);
}

TEST_CASE("score needs a full window") {
  HistoryStack stack(0.5, 0.01);
  stack.push(0.0, vec({0.0}), vec({0.0}), vec({0.0}));
  CHECK_THROWS_AS(integral_score(stack, zero_dynamics), InsufficientHistoryError);
}

TEST_CASE("zero residual gives a zero score") {
  const Eigen::VectorXd rate = vec({0.3, -1.2, 2.0});
  const auto stack = fill(
      0.5, 0.01, 1.0, [&](double t) { Eigen::VectorXd x = vec({1.0, 2.0, 3.0}) + rate * t; return x; },
      [&](double) { return rate; });
  const ScoreResult s = integral_score(stack, input_passthrough);
  CHECK(s.value <= 1e-12);

  // Smooth dynamics x' = x: trapezoid error only.
  const auto smooth = fill(
      0.5, 0.01, 0.0, [](double t) { return vec({std::exp(t)}); }, [](double) { return vec({0.0}); });
  const auto f = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::VectorXd(x);
  };
  CHECK(integral_score(smooth, f).value <= 1e-4);
}

TEST_CASE("constant residual is attained by the full window") {
  const Eigen::VectorXd nominal = vec({1.0, 0.0});
  const Eigen::VectorXd c = vec({0.3, -0.4});
  const auto stack = fill(
      0.5, 0.01, 2.0, [&](double t) { Eigen::VectorXd x = (nominal + c) * (t - 2.0); return x; },
      [&](double) { return nominal; });
  const ScoreResult s = integral_score(stack, input_passthrough);
  CHECK(s.value == doctest::Approx(0.5 * 0.5).epsilon(1e-12));
  CHECK(s.first == 0);
  CHECK(s.second == 50);
  CHECK(s.tau1 == doctest::Approx(2.0));
  CHECK(s.tau2 == doctest::Approx(2.5));
}

TEST_CASE("sign-flipping residual is attained on one half-window") {
  const Eigen::VectorXd c = vec({0.0, 2.0, 0.0});
  const auto r = [&](double t) -> Eigen::VectorXd {
    return t <= 0.25 ? Eigen::VectorXd(c * t) : Eigen::VectorXd(c * (0.5 - t));
  };
  const auto stack = fill(0.5, 0.01, 0.0, r, [](double) { return vec({0.0, 0.0, 0.0}); });
  const ScoreResult s = integral_score(stack, zero_dynamics);
  CHECK(s.value == doctest::Approx(2.0 * 0.25).epsilon(1e-12));
  CHECK(s.tau2 - s.tau1 == doctest::Approx(0.25));
}

TEST_CASE("score is nonnegative, sign symmetric and dominates the full-window pair") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Eigen::VectorXd> path(51);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
    for (auto& p : path) {
      x += 0.01 * Eigen::VectorXd::NullaryExpr(4, [&] { return n(rng); });
      p = x;
    }
    HistoryStack pos(0.5, 0.01);
    HistoryStack neg(0.5, 0.01);
    for (std::size_t i = 0; i < path.size(); ++i) {
      const double t = 0.01 * static_cast<double>(i);
      pos.push(t, path[i], vec({0.0}), vec({0.0}));
      neg.push(t, -path[i], vec({0.0}), vec({0.0}));
    }
    const ScoreResult a = integral_score(pos, zero_dynamics);
    const ScoreResult b = integral_score(neg, zero_dynamics);
    CHECK(a.value >= 0.0);
    CHECK(a.value == b.value);
    CHECK(a.value >= (path.back() - path.front()).norm());
    CHECK(a.first <= a.second);
    CHECK(std::abs(a.value - (a.residual_cumsum[a.second] - a.residual_cumsum[a.first]).norm()) <= 1e-12);
  }
}

TEST_CASE("quadrature converges at second order") {
  // x = e^t, f_nom = x / 2, so R(t) = (e^t - 1) / 2 on [0, 0.5].
  const double exact = 0.5 * (std::exp(0.5) - 1.0);
  const auto f = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::VectorXd(0.5 * x);
  };
  std::vector<double> log_h;
  std::vector<double> log_err;
  for (double h : {0.02, 0.01, 0.005, 0.0025, 0.00125}) {
    const auto stack = fill(0.5, h, 0.0, [](double t) { return vec({std::exp(t)}); },
                            [](double) { return vec({0.0}); });
    const double err = std::abs(integral_score(stack, f).value - exact);
    log_h.push_back(std::log(h));
    log_err.push_back(std::log(err));
  }
  const double n = static_cast<double>(log_h.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    mx += log_h[i] / n;
    my += log_err[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    sxy += (log_h[i] - mx) * (log_err[i] - my);
    sxx += (log_h[i] - mx) * (log_h[i] - mx);
  }
  CHECK(sxy / sxx >= 1.8);
}

TEST_CASE("oracle trajectories: constant limit") {
  const DisturbanceTrajectory d = lipschitz_disturbance_oracle(1e-300, 0.5, 0.01, 3);
  for (const auto& di : d.d) CHECK((di - d.d.front()).norm() <= 1e-12);
  CHECK(d.sup_norm == doctest::Approx(d.d.front().norm()).epsilon(1e-12));
  CHECK(d.score == doctest::Approx(d.d.front().norm() * 0.5).epsilon(1e-9));
}

TEST_CASE("oracle trajectories respect the Lipschitz bound and are deterministic") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const DisturbanceTrajectory a = lipschitz_disturbance_oracle(3.0, 0.5, 0.01, seed);
    const DisturbanceTrajectory b = lipschitz_disturbance_oracle(3.0, 0.5, 0.01, seed);
    CHECK(a.score == b.score);
    for (std::size_t i = 0; i + 1 < a.d.size(); ++i) {
      CHECK((a.d[i + 1] - a.d[i]).norm() <= 3.0 * 0.01 * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("integral score of an exactly integrated state matches the brute-force oracle") {
  // f_nom(x, u) = A x + u with u(t) = sin t, state from the exact trapezoid
  // recursion of f_nom + d on the grid so only d remains in the residual.
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const DisturbanceTrajectory d = lipschitz_disturbance_oracle(5.0, 0.5, 0.01, seed);
    HistoryStack stack(0.5, 0.01);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.2);
    Eigen::VectorXd nominal_integral = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd disturbance_integral = Eigen::VectorXd::Zero(3);
    const Eigen::VectorXd x0 = x;
    const auto u_of = [](double t) { return Eigen::VectorXd::Constant(3, std::sin(t)); };
    const auto f = [](const Eigen::VectorXd& s, const Eigen::VectorXd& u, const Eigen::VectorXd&) {
      return Eigen::VectorXd(-0.5 * s + u);
    };
    stack.push(d.t[0], x, u_of(d.t[0]), vec({0.0}));
    for (std::size_t i = 0; i + 1 < d.t.size(); ++i) {
      // The nominal part is defined implicitly by the trapezoid rule; solve the
      // linear step for x_{i+1}.
      const double h = d.t[i + 1] - d.t[i];
      const Eigen::VectorXd u = u_of(d.t[i + 1]);
      const Eigen::VectorXd fa = f(x, u, vec({0.0}));
      disturbance_integral += 0.5 * h * (d.d[i] + d.d[i + 1]);
      // x_{i+1} = x_i + h/2 (fa + (-0.5 x_{i+1} + u)) + h/2 (d_i + d_{i+1})
      const Eigen::VectorXd next =
          (x + 0.5 * h * (fa + u) + 0.5 * h * (d.d[i] + d.d[i + 1])) / (1.0 + 0.25 * h);
      nominal_integral += 0.5 * h * (fa + f(next, u, vec({0.0})));
      x = next;
      stack.push(d.t[i + 1], x, u, vec({0.0}));
    }
    const ScoreResult s = integral_score(stack, f);
    CHECK(std::abs(s.value - d.score) <= 1e-8 * std::max(1.0, d.score));
    CHECK((x - x0 - nominal_integral - disturbance_integral).norm() <= 1e-12);
  }
}

TEST_CASE("worst-case ramps meet the lower bounds in both regimes") {
  const double t_p = 0.5;
  const double lipschitz = 2.0;
  // Peak reachable inside the window: score >= d*^2 / (2 L).
  const DisturbanceTrajectory short_ramp = worst_case_ramp(0.6, lipschitz, t_p, 0.01);
  CHECK(short_ramp.score >= 0.6 * 0.6 / (2.0 * lipschitz) - 1e-12);
  CHECK(short_ramp.sup_norm == doctest::Approx(0.6));
  // Ramp longer than the window: score >= d* T - L T^2 / 2.
  const DisturbanceTrajectory long_ramp = worst_case_ramp(3.0, lipschitz, t_p, 0.01);
  CHECK(long_ramp.score >= 3.0 * t_p - 0.5 * lipschitz * t_p * t_p - 1e-12);
  // The margin recovers the peak from the score exactly on these profiles.
  CHECK(conformal::margin_bound(short_ramp.score, lipschitz, t_p) == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(conformal::margin_bound(long_ramp.score, lipschitz, t_p) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("oracle trajectories satisfy the margin bound") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.5, 20.0);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const double l = u(rng);
    const DisturbanceTrajectory d = lipschitz_disturbance_oracle(l, 0.5, 0.01, 1000 + seed);
    CHECK(d.sup_norm <= conformal::margin_bound(d.score, l, 0.5) + 1e-9);
  }
}

#include "siocp/history.hpp"

#include <cmath>
#include <sstream>

#include "siocp/errors.hpp"

namespace siocp::history {

HistoryStack::HistoryStack(double window, double grid_dt) : window_(window), grid_dt_(grid_dt) {
  if (!(window > 0.0) || !(grid_dt > 0.0)) throw ConfigError("history: window and grid_dt must be positive");
  const double ratio = window / grid_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError("history: window must be an integer multiple of grid_dt");
  }
  capacity_ = static_cast<std::size_t>(std::llround(ratio)) + 1;
}

void HistoryStack::push(double t, Eigen::VectorXd x, Eigen::VectorXd u, Eigen::VectorXd theta) {
  if (!std::isfinite(t)) throw DataIntegrityError("history: non-finite timestamp");
  if (!samples_.empty()) {
    const double expected = samples_.back().t + grid_dt_;
    if (std::abs(t - expected) > kTimeTolerance) {
      std::ostringstream os;
      os.precision(12);
      os << "history: sample at t=" << t << " does not follow t=" << samples_.back().t
         << " by grid_dt=" << grid_dt_;
      throw SequencingError(os.str());
    }
    const auto& prev = samples_.back();
    if (x.size() != prev.x.size() || u.size() != prev.u.size() || theta.size() != prev.theta.size()) {
      throw DataIntegrityError("history: sample dimensions changed");
    }
  }
  samples_.push_back(Sample{t, std::move(x), std::move(u), std::move(theta)});
  while (samples_.size() > capacity_) samples_.pop_front();
}

ScoreResult supremum_pair_scan(std::vector<Eigen::VectorXd> cumulative, const std::vector<double>& times) {
  ScoreResult out;
  const std::size_t n = cumulative.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = (cumulative[j] - cumulative[i]).norm();
      if (v > out.value) {
        out.value = v;
        out.first = i;
        out.second = j;
      }
    }
  }
  if (!times.empty()) {
    out.tau1 = times[out.first];
    out.tau2 = times[out.second];
  }
  out.residual_cumsum = std::move(cumulative);
  return out;
}

ScoreResult integral_score(const HistoryStack& stack, const NominalDynamics& f_nom) {
  if (!stack.full()) {
    std::ostringstream os;
    os << "history: score needs " << stack.capacity() << " samples, have " << stack.size();
    throw InsufficientHistoryError(os.str());
  }
  const auto& s = stack.samples();
  const std::size_t n = s.size();
  std::vector<Eigen::VectorXd> cumulative(n);
  std::vector<double> times(n);
  Eigen::VectorXd integral = Eigen::VectorXd::Zero(s.front().x.size());
  cumulative[0] = Eigen::VectorXd::Zero(integral.size());
  times[0] = s[0].t;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto& a = s[i];
    const auto& b = s[i + 1];
    const Eigen::VectorXd fa = f_nom(a.x, b.u, a.theta);
    const Eigen::VectorXd fb = f_nom(b.x, b.u, b.theta);
    if (!fa.allFinite() || !fb.allFinite()) throw DataIntegrityError("history: non-finite nominal derivative");
    integral += 0.5 * (b.t - a.t) * (fa + fb);
    cumulative[i + 1] = b.x - s.front().x - integral;
    times[i + 1] = b.t;
  }
  return supremum_pair_scan(std::move(cumulative), times);
}

}  // namespace siocp::history

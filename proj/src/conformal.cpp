#include "siocp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "siocp/errors.hpp"

namespace siocp::conformal {

void OcpConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("ocp: " + msg); };
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (!(eta1 > 0.0)) fail("eta1 must be positive");
  if (!(lipschitz > 0.0)) fail("lipschitz must be positive");
  if (!(horizon > 0.0)) fail("horizon must be positive");
  if (!(dt > 0.0)) fail("dt must be positive");
  if (!(d_init >= 0.0)) fail("d_init must be nonnegative");
  if (!std::isfinite(q_init)) fail("q_init must be finite");
  const double ratio = horizon / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio) || std::round(ratio) < 1.0) {
    std::ostringstream os;
    os << "horizon " << horizon << " is not a positive integer multiple of dt " << dt;
    fail(os.str());
  }
}

std::size_t OcpConfig::threads() const {
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

double OcpConfig::step_size(std::int64_t k) const {
  switch (schedule) {
    case StepSchedule::Constant:
      return eta1;
    case StepSchedule::InverseSqrt:
      return eta1 / std::sqrt(static_cast<double>(std::max<std::int64_t>(k, 1)));
  }
  return eta1;
}

double pinball_loss(double r, double alpha) {
  return (1.0 - alpha) * std::max(r, 0.0) + alpha * std::max(-r, 0.0);
}

double ocp_update(double q, double score, double eta, double alpha) {
  if (!std::isfinite(score)) throw DataIntegrityError("ocp_update: non-finite score");
  const double miss = score > q ? 1.0 : 0.0;
  return q + eta * (miss - alpha);
}

double coverage_bound(double score_bound, double eta1, double eta_last, std::int64_t updates) {
  return (score_bound + eta1) / (eta_last * static_cast<double>(updates));
}

ThreadBank::ThreadBank(std::size_t threads, double q_init)
    : thresholds_(threads, q_init), counts_(threads, 0) {
  if (threads == 0) throw ConfigError("thread bank needs at least one thread");
}

double ThreadBank::update(std::int64_t k, double score, const OcpConfig& cfg) {
  if (thresholds_.size() != cfg.threads()) {
    throw ConfigError("thread bank size does not match horizon / dt");
  }
  if (k < 0 || (last_step_ && k <= *last_step_)) {
    std::ostringstream os;
    os << "thread bank: step " << k << " does not follow step "
       << (last_step_ ? std::to_string(*last_step_) : std::string("<none>"));
    throw SequencingError(os.str());
  }
  const auto j = static_cast<std::size_t>(k % static_cast<std::int64_t>(thresholds_.size()));
  thresholds_[j] = ocp_update(thresholds_[j], score, cfg.step_size(k), cfg.alpha);
  ++counts_[j];
  last_step_ = k;
  return thresholds_[j];
}

nlohmann::json ThreadBank::to_json() const {
  nlohmann::json j;
  j["thresholds"] = thresholds_;
  j["update_counts"] = counts_;
  j["step_index"] = last_step_ ? nlohmann::json(*last_step_) : nlohmann::json(nullptr);
  return j;
}

ThreadBank ThreadBank::from_json(const nlohmann::json& j) {
  ThreadBank bank;
  try {
    bank.thresholds_ = j.at("thresholds").get<std::vector<double>>();
    bank.counts_ = j.at("update_counts").get<std::vector<std::int64_t>>();
    const auto& step = j.at("step_index");
    if (!step.is_null()) bank.last_step_ = step.get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("thread bank checkpoint: ") + e.what());
  }
  if (bank.thresholds_.empty() || bank.thresholds_.size() != bank.counts_.size()) {
    throw ConfigError("thread bank checkpoint: inconsistent array lengths");
  }
  for (double q : bank.thresholds_) {
    if (!std::isfinite(q)) throw DataIntegrityError("thread bank checkpoint: non-finite threshold");
  }
  return bank;
}

std::string to_string(MarginCase c) {
  switch (c) {
    case MarginCase::SqrtCase:
      return "sqrt";
    case MarginCase::TrapezoidCase:
      return "trapezoid";
    case MarginCase::InitialPhase:
      return "initial";
  }
  return "unknown";
}

double margin_bound(double q_active, double lipschitz, double horizon) {
  const double q = std::max(q_active, 0.0);
  if (q < 0.5 * lipschitz * horizon * horizon) return std::sqrt(2.0 * lipschitz * q);
  return q / horizon + 0.5 * lipschitz * horizon;
}

MarginRecord margin_from_threshold(double q_active, const OcpConfig& cfg) {
  MarginRecord rec;
  rec.q_active = q_active;
  const double q = std::max(q_active, 0.0);
  rec.margin_case = q < 0.5 * cfg.lipschitz * cfg.horizon * cfg.horizon ? MarginCase::SqrtCase
                                                                         : MarginCase::TrapezoidCase;
  rec.d_bar = margin_bound(q, cfg.lipschitz, cfg.horizon);
  return rec;
}

MarginRecord initial_margin(std::int64_t k, const OcpConfig& cfg) {
  MarginRecord rec;
  rec.k = k;
  rec.margin_case = MarginCase::InitialPhase;
  rec.d_bar = cfg.d_init;
  rec.thread = cfg.threads() ? static_cast<std::size_t>(k % static_cast<std::int64_t>(cfg.threads())) : 0;
  return rec;
}

}  // namespace siocp::conformal

#pragma once

// Staggered online conformal thresholds and the conversion from an
// integral-score threshold to a pointwise disturbance margin.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace siocp::conformal {

enum class StepSchedule { Constant, InverseSqrt };

struct OcpConfig {
  double alpha = 0.1;
  StepSchedule schedule = StepSchedule::Constant;
  double eta1 = 0.05;
  double q_init = 0.0;
  double d_init = 5.0;
  double lipschitz = 1.0;  // L_d, bound on |d/dt d(t)|
  double horizon = 0.5;    // T_p [s]
  double dt = 0.05;        // controller period [s]

  /// Throws ConfigError when any field is out of range or horizon/dt is not integral.
  void validate() const;
  /// Number of staggered threads, horizon / dt.
  std::size_t threads() const;
  double step_size(std::int64_t k) const;
};

double pinball_loss(double r, double alpha);

/// One sub-gradient step on the pinball loss. A score equal to the threshold
/// counts as covered.
double ocp_update(double q, double score, double eta, double alpha);

/// Bound on the empirical coverage error after K updates with a
/// non-increasing step size.
double coverage_bound(double score_bound, double eta1, double eta_last, std::int64_t updates);

class ThreadBank {
 public:
  ThreadBank() = default;
  ThreadBank(std::size_t threads, double q_init);

  /// Updates thread k mod P with the score for the window ending at step k
  /// and returns the new threshold of that thread. Steps must strictly increase.
  double update(std::int64_t k, double score, const OcpConfig& cfg);

  std::size_t size() const { return thresholds_.size(); }
  double threshold(std::size_t j) const { return thresholds_.at(j); }
  const std::vector<double>& thresholds() const { return thresholds_; }
  const std::vector<std::int64_t>& update_counts() const { return counts_; }
  /// Last step passed to update, or nullopt if never updated.
  std::optional<std::int64_t> last_step() const { return last_step_; }

  nlohmann::json to_json() const;
  static ThreadBank from_json(const nlohmann::json& j);

 private:
  std::vector<double> thresholds_;
  std::vector<std::int64_t> counts_;
  std::optional<std::int64_t> last_step_;
};

enum class MarginCase { SqrtCase, TrapezoidCase, InitialPhase };

std::string to_string(MarginCase c);

struct MarginRecord {
  std::int64_t k = 0;
  std::size_t thread = 0;
  double q_active = 0.0;
  MarginCase margin_case = MarginCase::InitialPhase;
  double d_bar = 0.0;
};

/// Pointwise bound on |d| over the next horizon given that the integral score
/// over that horizon does not exceed q_active. Negative thresholds are clamped.
MarginRecord margin_from_threshold(double q_active, const OcpConfig& cfg);
double margin_bound(double q_active, double lipschitz, double horizon);

MarginRecord initial_margin(std::int64_t k, const OcpConfig& cfg);

}  // namespace siocp::conformal

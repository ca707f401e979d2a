#pragma once

// Rolling window of state, input and parameter samples on a uniform grid,
// and the supremum integral non-conformity score computed from it.

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace siocp::history {

/// f_nom(x, u, theta): the online-computable nominal state derivative.
using NominalDynamics =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& theta)>;

/// `u` is the input that was held over the grid interval ending at `t`.
struct Sample {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd theta;
};

class HistoryStack {
 public:
  static constexpr double kTimeTolerance = 1e-9;

  HistoryStack(double window, double grid_dt);

  /// Appends a sample exactly one grid step after the previous one and evicts
  /// samples older than t - window. Throws SequencingError otherwise.
  void push(double t, Eigen::VectorXd x, Eigen::VectorXd u, Eigen::VectorXd theta);
  void clear() { samples_.clear(); }

  bool full() const { return samples_.size() == capacity_; }
  std::size_t size() const { return samples_.size(); }
  std::size_t capacity() const { return capacity_; }
  double window() const { return window_; }
  double grid_dt() const { return grid_dt_; }
  const std::deque<Sample>& samples() const { return samples_; }

 private:
  double window_;
  double grid_dt_;
  std::size_t capacity_;
  std::deque<Sample> samples_;
};

struct ScoreResult {
  double value = 0.0;
  std::size_t first = 0;  // grid index of tau_1
  std::size_t second = 0; // grid index of tau_2
  double tau1 = 0.0;
  double tau2 = 0.0;
  /// R(tau_i) = x(tau_i) - x(tau_0) - integral of f_nom from tau_0 to tau_i.
  std::vector<Eigen::VectorXd> residual_cumsum;
};

/// Largest ||R_j - R_i|| over all grid pairs i <= j, O(N^2).
ScoreResult supremum_pair_scan(std::vector<Eigen::VectorXd> cumulative, const std::vector<double>& times);

/// Supremum over sub-windows of the norm of the integrated model residual.
/// Trapezoidal quadrature of f_nom, with the input held over each grid
/// interval and the stored parameter trajectory at both ends.
/// Throws InsufficientHistoryError unless the stack covers the full window.
ScoreResult integral_score(const HistoryStack& stack, const NominalDynamics& f_nom);

}  // namespace siocp::history

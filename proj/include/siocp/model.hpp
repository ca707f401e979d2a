#pragma once

// Adaptive residual-acceleration predictor: a 5-50-50-50-3 ReLU network whose
// full parameter vector is adapted online by a gradient law with
// regularization toward a prior and a norm projection.

#include <cstdint>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

namespace siocp::model {

using Features = Eigen::Matrix<double, 5, 1>;   // [v_x, v_y, v_z, roll, pitch]
using FeatureBatch = Eigen::Matrix<double, 5, Eigen::Dynamic>;
using Accel = Eigen::Vector3d;
using AccelBatch = Eigen::Matrix<double, 3, Eigen::Dynamic>;

namespace layout {
inline constexpr int kInput = 5;
inline constexpr int kHidden = 50;
inline constexpr int kOutput = 3;
// Column-major weight blocks followed by their biases.
inline constexpr int kW1 = 0;
inline constexpr int kB1 = kW1 + kHidden * kInput;
inline constexpr int kW2 = kB1 + kHidden;
inline constexpr int kB2 = kW2 + kHidden * kHidden;
inline constexpr int kW3 = kB2 + kHidden;
inline constexpr int kB3 = kW3 + kHidden * kHidden;
inline constexpr int kW4 = kB3 + kHidden;
inline constexpr int kB4 = kW4 + kOutput * kHidden;
inline constexpr int kParams = kB4 + kOutput;
static_assert(kParams == 5553);
}  // namespace layout

inline constexpr double kNormLimit = 10.0;

struct MlpParams {
  Eigen::VectorXd theta;  // current estimate
  Eigen::VectorXd prior;  // regularization target

  static MlpParams zeros();
  /// Gaussian weights with std scale / sqrt(fan_in), zero biases; theta = prior.
  static MlpParams random(std::uint64_t seed, double scale = 0.1);
  /// Throws DataIntegrityError on wrong sizes or non-finite entries.
  void validate() const;
};

struct AdaptConfig {
  double gamma = 5.0;
  double lambda = 0.1;
  double dt = 0.01;
};

Accel forward(const Eigen::VectorXd& theta, const Features& xi);
AccelBatch forward_batch(const Eigen::VectorXd& theta, const FeatureBatch& xi);

/// dF/dtheta, 3 x 5553. The ReLU derivative at exactly zero is taken as zero.
Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, const Features& xi);

/// J^T * upstream without forming J.
Eigen::VectorXd jacobian_transpose_times(const Eigen::VectorXd& theta, const Features& xi,
                                         const Accel& upstream);

/// theta <- theta + dt * (gamma J^T eps - lambda (theta - prior)), then
/// rescaled onto the ball ||theta|| <= 10 if it left it.
MlpParams adapt_step(MlpParams params, const Features& xi, const Accel& eps_acc, const AdaptConfig& cfg);
void adapt_in_place(MlpParams& params, const Features& xi, const Accel& eps_acc, const AdaptConfig& cfg);

/// Finite-difference acceleration residual (v_now - v_prev) / dt - vdot_nom.
Accel residual_eps_acc(const Eigen::Vector3d& v_now, const Eigen::Vector3d& v_prev, double dt,
                       const Eigen::Vector3d& vdot_nom);

/// Product of the layer spectral norms, an upper bound on the input Lipschitz constant.
double lipschitz_upper_bound(const Eigen::VectorXd& theta);

nlohmann::json to_json(const MlpParams& params);
MlpParams from_json(const nlohmann::json& j);
void save(const MlpParams& params, const std::string& path);
MlpParams load(const std::string& path);

}  // namespace siocp::model

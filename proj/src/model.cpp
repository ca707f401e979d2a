#include "siocp/model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "siocp/errors.hpp"

namespace siocp::model {

namespace {

using namespace layout;
using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using Mat = Eigen::Map<Eigen::MatrixXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

struct Layers {
  ConstMat w1, w2, w3, w4;
  ConstVec b1, b2, b3, b4;

  explicit Layers(const Eigen::VectorXd& theta)
      : w1(theta.data() + kW1, kHidden, kInput),
        w2(theta.data() + kW2, kHidden, kHidden),
        w3(theta.data() + kW3, kHidden, kHidden),
        w4(theta.data() + kW4, kOutput, kHidden),
        b1(theta.data() + kB1, kHidden),
        b2(theta.data() + kB2, kHidden),
        b3(theta.data() + kB3, kHidden),
        b4(theta.data() + kB4, kOutput) {}
};

void check_size(const Eigen::VectorXd& theta) {
  if (theta.size() != kParams) throw DataIntegrityError("mlp: parameter vector has wrong length");
}

Eigen::VectorXd relu(const Eigen::VectorXd& z) { return z.cwiseMax(0.0); }
Eigen::VectorXd relu_mask(const Eigen::VectorXd& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

}  // namespace

MlpParams MlpParams::zeros() {
  return {Eigen::VectorXd::Zero(kParams), Eigen::VectorXd::Zero(kParams)};
}

MlpParams MlpParams::random(std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(kParams);
  auto fill = [&](int offset, int count, int fan_in) {
    std::normal_distribution<double> n(0.0, scale / std::sqrt(static_cast<double>(fan_in)));
    for (int i = 0; i < count; ++i) theta[offset + i] = n(rng);
  };
  fill(kW1, kHidden * kInput, kInput);
  fill(kW2, kHidden * kHidden, kHidden);
  fill(kW3, kHidden * kHidden, kHidden);
  fill(kW4, kOutput * kHidden, kHidden);
  return {theta, theta};
}

void MlpParams::validate() const {
  check_size(theta);
  check_size(prior);
  if (!theta.allFinite() || !prior.allFinite()) throw DataIntegrityError("mlp: non-finite parameters");
}

Accel forward(const Eigen::VectorXd& theta, const Features& xi) {
  check_size(theta);
  const Layers l(theta);
  const Eigen::VectorXd h1 = relu(l.w1 * xi + l.b1);
  const Eigen::VectorXd h2 = relu(l.w2 * h1 + l.b2);
  const Eigen::VectorXd h3 = relu(l.w3 * h2 + l.b3);
  return l.w4 * h3 + l.b4;
}

AccelBatch forward_batch(const Eigen::VectorXd& theta, const FeatureBatch& xi) {
  check_size(theta);
  const Layers l(theta);
  Eigen::MatrixXd h = (l.w1 * xi).colwise() + l.b1;
  h = h.cwiseMax(0.0);
  Eigen::MatrixXd g = (l.w2 * h).colwise() + l.b2;
  g = g.cwiseMax(0.0);
  h.noalias() = l.w3 * g;
  h.colwise() += l.b3;
  h = h.cwiseMax(0.0);
  AccelBatch out = l.w4 * h;
  out.colwise() += l.b4;
  return out;
}

Eigen::VectorXd jacobian_transpose_times(const Eigen::VectorXd& theta, const Features& xi,
                                         const Accel& upstream) {
  check_size(theta);
  const Layers l(theta);
  const Eigen::VectorXd z1 = l.w1 * xi + l.b1;
  const Eigen::VectorXd h1 = relu(z1);
  const Eigen::VectorXd z2 = l.w2 * h1 + l.b2;
  const Eigen::VectorXd h2 = relu(z2);
  const Eigen::VectorXd z3 = l.w3 * h2 + l.b3;
  const Eigen::VectorXd h3 = relu(z3);

  Eigen::VectorXd grad(kParams);
  Mat(grad.data() + kW4, kOutput, kHidden) = upstream * h3.transpose();
  Vec(grad.data() + kB4, kOutput) = upstream;

  const Eigen::VectorXd d3 = (l.w4.transpose() * upstream).cwiseProduct(relu_mask(z3));
  Mat(grad.data() + kW3, kHidden, kHidden) = d3 * h2.transpose();
  Vec(grad.data() + kB3, kHidden) = d3;

  const Eigen::VectorXd d2 = (l.w3.transpose() * d3).cwiseProduct(relu_mask(z2));
  Mat(grad.data() + kW2, kHidden, kHidden) = d2 * h1.transpose();
  Vec(grad.data() + kB2, kHidden) = d2;

  const Eigen::VectorXd d1 = (l.w2.transpose() * d2).cwiseProduct(relu_mask(z1));
  Mat(grad.data() + kW1, kHidden, kInput) = d1 * xi.transpose();
  Vec(grad.data() + kB1, kHidden) = d1;
  return grad;
}

Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, const Features& xi) {
  Eigen::MatrixXd jac(kOutput, kParams);
  for (int o = 0; o < kOutput; ++o) {
    jac.row(o) = jacobian_transpose_times(theta, xi, Accel::Unit(o)).transpose();
  }
  return jac;
}

void adapt_in_place(MlpParams& params, const Features& xi, const Accel& eps_acc, const AdaptConfig& cfg) {
  if (!eps_acc.allFinite()) throw DataIntegrityError("adapt: non-finite acceleration residual");
  const Eigen::VectorXd grad = jacobian_transpose_times(params.theta, xi, eps_acc);
  params.theta += cfg.dt * (cfg.gamma * grad - cfg.lambda * (params.theta - params.prior));
  const double norm = params.theta.norm();
  if (norm > kNormLimit) params.theta *= kNormLimit / norm;
}

MlpParams adapt_step(MlpParams params, const Features& xi, const Accel& eps_acc, const AdaptConfig& cfg) {
  adapt_in_place(params, xi, eps_acc, cfg);
  return params;
}

Accel residual_eps_acc(const Eigen::Vector3d& v_now, const Eigen::Vector3d& v_prev, double dt,
                       const Eigen::Vector3d& vdot_nom) {
  if (!(dt > 0.0)) throw DataIntegrityError("residual_eps_acc: dt must be positive");
  return (v_now - v_prev) / dt - vdot_nom;
}

double lipschitz_upper_bound(const Eigen::VectorXd& theta) {
  check_size(theta);
  const Layers l(theta);
  auto spectral = [](const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues()(0);
  };
  return spectral(l.w1) * spectral(l.w2) * spectral(l.w3) * spectral(l.w4);
}

nlohmann::json to_json(const MlpParams& params) {
  nlohmann::json j;
  j["architecture"] = {kInput, kHidden, kHidden, kHidden, kOutput};
  j["theta"] = std::vector<double>(params.theta.data(), params.theta.data() + params.theta.size());
  j["prior"] = std::vector<double>(params.prior.data(), params.prior.data() + params.prior.size());
  return j;
}

MlpParams from_json(const nlohmann::json& j) {
  const std::vector<int> expected{kInput, kHidden, kHidden, kHidden, kOutput};
  MlpParams p;
  try {
    if (j.at("architecture").get<std::vector<int>>() != expected) {
      throw ConfigError("mlp checkpoint: architecture mismatch");
    }
    const auto theta = j.at("theta").get<std::vector<double>>();
    const auto prior = j.at("prior").get<std::vector<double>>();
    p.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    p.prior = Eigen::Map<const Eigen::VectorXd>(prior.data(), static_cast<Eigen::Index>(prior.size()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mlp checkpoint: ") + e.what());
  }
  p.validate();
  return p;
}

void save(const MlpParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_json(params).dump() << '\n';
}

MlpParams load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace siocp::model

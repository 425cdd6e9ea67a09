#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "randlora/errors.hpp"

namespace randlora {

enum class OptimizerKind { SGD, AdamLike };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::AdamLike;
  double step_size = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_iters = 5000;
  std::uint64_t seed = 0;

  void validate() const {
    constexpr const char* where = "trainkit::OptimizerConfig";
    if (!(step_size > 0.0)) detail::fail<UsageError>(where, "step_size must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) detail::fail<UsageError>(where, "beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) detail::fail<UsageError>(where, "beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) detail::fail<UsageError>(where, "eps must be > 0");
    if (max_iters < 0) detail::fail<UsageError>(where, "max_iters must be >= 0");
  }
};

inline std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::SGD ? "sgd" : "adam";
}

/// Stateful first-order optimizer over a flat parameter vector.
class Optimizer {
public:
  explicit Optimizer(const OptimizerConfig& config) : config_(config) { config_.validate(); }

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (config_.kind == OptimizerKind::SGD) {
      params.noalias() -= config_.step_size * grad;
      return;
    }
    if (m_.size() != params.size()) {
      m_ = Eigen::VectorXd::Zero(params.size());
      v_ = Eigen::VectorXd::Zero(params.size());
      t_ = 0;
    }
    ++t_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, t_);
    const double c2 = 1.0 - std::pow(config_.beta2, t_);
    params.array() -= config_.step_size * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.eps);
  }

  const OptimizerConfig& config() const { return config_; }

private:
  OptimizerConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int t_ = 0;
};

} // namespace randlora

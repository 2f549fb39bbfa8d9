#pragma once

#include <cstddef>
#include <vector>

#include "ddppo/nn/network.hpp"

namespace ddppo::nn {

// Flattened samples for one PPO minibatch. `obs` is row-major
// (size() rows of obs_dim).
struct PpoBatch {
  std::size_t obs_dim = 0;
  std::vector<double> obs;
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
  std::span<const double> observation(std::size_t i) const {
    return std::span<const double>(obs).subspan(i * obs_dim, obs_dim);
  }
};

struct LossConfig {
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
};

struct LossStats {
  double policy_loss = 0.0;   // -mean(min(r A, clip(r) A))
  double value_loss = 0.0;    // 0.5 mean((V - R)^2)
  double entropy = 0.0;       // mean policy entropy
  double clip_fraction = 0.0; // fraction of samples with |r - 1| > eps
  double total_loss = 0.0;    // policy + c_v value - c_e entropy
};

struct LossAndGrad {
  LossStats stats;
  ParamVector grad;
};

// Per-sample clipped surrogate min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double clip_eps);

// Loss and its analytic gradient, averaged over the batch's own samples.
// Throws NumericalError naming the first non-finite tensor.
LossAndGrad loss_and_grad(const NetSpec& spec, const ParamVector& params,
                          const PpoBatch& batch, const LossConfig& cfg);

}  // namespace ddppo::nn

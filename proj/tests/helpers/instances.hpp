#pragma once

// Random problem instances shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ddppo/common/random.hpp"
#include "ddppo/nn/network.hpp"
#include "ddppo/nn/ppo_loss.hpp"

namespace instances {

inline ddppo::nn::NetSpec random_spec(ddppo::Rng& rng, std::size_t max_hidden = 16) {
  ddppo::nn::NetSpec spec;
  spec.obs_dim = 1 + rng.uniform_index(8);
  spec.hidden_dims.clear();
  const std::size_t depth = 1 + rng.uniform_index(2);
  for (std::size_t i = 0; i < depth; ++i) spec.hidden_dims.push_back(2 + rng.uniform_index(max_hidden - 1));
  spec.num_actions = 2 + rng.uniform_index(4);
  return spec;
}

// Dense random parameters (not the orthogonal init) so every gradient entry
// is exercised with non-trivial magnitude.
inline ddppo::nn::ParamVector random_params(const ddppo::nn::NetSpec& spec, ddppo::Rng& rng,
                                            double scale = 0.5) {
  ddppo::nn::ParamVector p{ddppo::nn::Layout(spec)};
  for (double& x : p.values) x = scale * rng.normal();
  return p;
}

// Old log-probabilities are the current ones shifted by noise so the batch
// mixes clipped and unclipped samples.
inline ddppo::nn::PpoBatch random_batch(const ddppo::nn::NetSpec& spec,
                                        const ddppo::nn::ParamVector& params, std::size_t n,
                                        ddppo::Rng& rng, double ratio_noise = 0.3) {
  ddppo::nn::PpoBatch b;
  b.obs_dim = spec.obs_dim;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> o(spec.obs_dim);
    for (double& x : o) x = rng.normal();
    const auto out = ddppo::nn::forward(spec, params, o);
    const auto logp = ddppo::nn::log_softmax(out.action_logits);
    const int a = static_cast<int>(rng.uniform_index(spec.num_actions));
    b.obs.insert(b.obs.end(), o.begin(), o.end());
    b.actions.push_back(a);
    b.old_log_probs.push_back(logp[static_cast<std::size_t>(a)] + ratio_noise * rng.normal());
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
  }
  return b;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                                 double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace instances

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ddppo/common/random.hpp"
#include "ddppo/nn/ppo_loss.hpp"

namespace ddppo::rollout {

// Time series collected from one environment during a single rollout.
// `bootstrap_value` is V(s) of the state that follows the last stored step
// (used when that step did not end an episode: capacity reached or the
// rollout was preempted).
struct EnvTrajectory {
  std::vector<double> obs;  // steps x obs_dim
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  double bootstrap_value = 0.0;

  std::size_t steps() const { return actions.size(); }
};

class RolloutBuffer {
 public:
  RolloutBuffer(std::size_t num_envs, std::size_t capacity, std::size_t obs_dim);

  std::size_t num_envs() const { return envs_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t obs_dim() const { return obs_dim_; }

  // Throws ProtocolError when the env is already at capacity.
  void push(std::size_t env, std::span<const double> obs, int action, double log_prob,
            double value, double reward, bool done);
  void set_bootstrap(std::size_t env, double value);

  const EnvTrajectory& env(std::size_t i) const { return envs_.at(i); }
  EnvTrajectory& env(std::size_t i) { return envs_.at(i); }

  std::size_t steps_collected(std::size_t env) const { return envs_.at(env).steps(); }
  std::size_t total_steps() const;

  // 0 < steps <= capacity for every env; throws ProtocolError otherwise.
  void validate() const;

  // Hash of the parameters the data was collected with; lets the optimizer
  // assert it never consumes stale experience.
  std::uint64_t params_hash = 0;

 private:
  std::size_t capacity_;
  std::size_t obs_dim_;
  std::vector<EnvTrajectory> envs_;
};

// Per-env advantages and returns aligned with the buffer's reward arrays.
struct AdvantageSet {
  std::vector<std::vector<double>> advantages;
  std::vector<std::vector<double>> returns;
};

// Generalized advantage estimation, backward in time per env:
//   delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t
//   A_t     = delta_t + gamma tau (1 - done_t) A_{t+1}
// with V_{T'} = bootstrap_value for the last stored step; R_t = A_t + V_t.
AdvantageSet compute_gae(const RolloutBuffer& buffer, double gamma, double tau);

// One epoch of minibatches. Environments (whole trajectories, not single
// steps) are shuffled and split into `num_minibatches` equal groups.
// Throws ConfigError when the env count is not divisible.
std::vector<nn::PpoBatch> make_ppo_batches(const RolloutBuffer& buffer,
                                           const AdvantageSet& adv, Rng& rng,
                                           std::size_t num_minibatches);

}  // namespace ddppo::rollout

#include "ddppo/rollout/rollout.hpp"

#include <numeric>

#include "ddppo/common/error.hpp"

namespace ddppo::rollout {

RolloutBuffer::RolloutBuffer(std::size_t num_envs, std::size_t capacity, std::size_t obs_dim)
    : capacity_(capacity), obs_dim_(obs_dim), envs_(num_envs) {
  if (num_envs == 0 || capacity == 0 || obs_dim == 0) {
    throw ConfigError("RolloutBuffer: envs, capacity and obs_dim must be positive");
  }
  for (auto& e : envs_) {
    e.obs.reserve(capacity * obs_dim);
    e.actions.reserve(capacity);
    e.log_probs.reserve(capacity);
    e.values.reserve(capacity);
    e.rewards.reserve(capacity);
    e.dones.reserve(capacity);
  }
}

void RolloutBuffer::push(std::size_t env, std::span<const double> obs, int action,
                         double log_prob, double value, double reward, bool done) {
  auto& e = envs_.at(env);
  if (e.steps() >= capacity_) throw ProtocolError("RolloutBuffer: env is full");
  if (obs.size() != obs_dim_) throw ConfigError("RolloutBuffer: observation size mismatch");
  e.obs.insert(e.obs.end(), obs.begin(), obs.end());
  e.actions.push_back(action);
  e.log_probs.push_back(log_prob);
  e.values.push_back(value);
  e.rewards.push_back(reward);
  e.dones.push_back(done ? 1 : 0);
}

void RolloutBuffer::set_bootstrap(std::size_t env, double value) {
  envs_.at(env).bootstrap_value = value;
}

std::size_t RolloutBuffer::total_steps() const {
  std::size_t n = 0;
  for (const auto& e : envs_) n += e.steps();
  return n;
}

void RolloutBuffer::validate() const {
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    const auto n = envs_[i].steps();
    if (n == 0 || n > capacity_) {
      throw ProtocolError("RolloutBuffer: env " + std::to_string(i) + " holds " +
                          std::to_string(n) + " steps (capacity " + std::to_string(capacity_) +
                          ")");
    }
  }
}

AdvantageSet compute_gae(const RolloutBuffer& buffer, double gamma, double tau) {
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(tau >= 0.0 && tau <= 1.0)) {
    throw ConfigError("compute_gae: gamma and tau must lie in [0, 1]");
  }
  buffer.validate();
  AdvantageSet out;
  out.advantages.resize(buffer.num_envs());
  out.returns.resize(buffer.num_envs());
  for (std::size_t e = 0; e < buffer.num_envs(); ++e) {
    const auto& traj = buffer.env(e);
    const std::size_t n = traj.steps();
    auto& adv = out.advantages[e];
    auto& ret = out.returns[e];
    adv.assign(n, 0.0);
    ret.assign(n, 0.0);
    double next_value = traj.bootstrap_value;
    double next_adv = 0.0;
    for (std::size_t t = n; t-- > 0;) {
      const double not_done = traj.dones[t] ? 0.0 : 1.0;
      const double delta = traj.rewards[t] + gamma * next_value * not_done - traj.values[t];
      next_adv = delta + gamma * tau * not_done * next_adv;
      adv[t] = next_adv;
      ret[t] = next_adv + traj.values[t];
      next_value = traj.values[t];
    }
  }
  return out;
}

std::vector<nn::PpoBatch> make_ppo_batches(const RolloutBuffer& buffer, const AdvantageSet& adv,
                                           Rng& rng, std::size_t num_minibatches) {
  const std::size_t envs = buffer.num_envs();
  if (num_minibatches == 0 || envs % num_minibatches != 0) {
    throw ConfigError("make_ppo_batches: " + std::to_string(envs) +
                      " envs cannot be split into " + std::to_string(num_minibatches) +
                      " minibatches");
  }
  std::vector<std::size_t> order(envs);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = envs; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }

  const std::size_t per_batch = envs / num_minibatches;
  std::vector<nn::PpoBatch> batches(num_minibatches);
  for (std::size_t b = 0; b < num_minibatches; ++b) {
    auto& batch = batches[b];
    batch.obs_dim = buffer.obs_dim();
    for (std::size_t k = 0; k < per_batch; ++k) {
      const std::size_t e = order[b * per_batch + k];
      const auto& traj = buffer.env(e);
      batch.obs.insert(batch.obs.end(), traj.obs.begin(), traj.obs.end());
      batch.actions.insert(batch.actions.end(), traj.actions.begin(), traj.actions.end());
      batch.old_log_probs.insert(batch.old_log_probs.end(), traj.log_probs.begin(),
                                 traj.log_probs.end());
      batch.advantages.insert(batch.advantages.end(), adv.advantages.at(e).begin(),
                              adv.advantages.at(e).end());
      batch.returns.insert(batch.returns.end(), adv.returns.at(e).begin(), adv.returns.at(e).end());
    }
  }
  return batches;
}

}  // namespace ddppo::rollout

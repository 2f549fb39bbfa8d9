#pragma once

#include <cstdint>
#include <string>

#include "ddppo/envs/grid.hpp"
#include "ddppo/envs/nav_env.hpp"
#include "ddppo/nn/network.hpp"
#include "ddppo/nn/ppo_loss.hpp"
#include "json.hpp"

namespace ddppo::trainer {

enum class TransferMode { kScratch, kFrozenEncoder, kFinetune };

std::string to_string(TransferMode m);
TransferMode transfer_mode_from_string(const std::string& s);

struct TrainConfig {
  // PPO / GAE
  double gamma = 0.99;
  double gae_tau = 0.95;
  double clip_eps = 0.2;
  int rollout_len = 128;  // T
  int envs_per_worker = 4;  // E
  int epochs = 2;
  int minibatches = 2;
  double lr = 2.5e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  double preempt_p = 0.6;

  std::int64_t total_steps = 2'000'000;  // summed over workers
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden_dims{64, 64};

  envs::EnvConfig env;
  envs::MapSetSpec maps;
  int num_train_maps = 256;
  // Draw a fresh training map at every episode reset; otherwise each env
  // slot keeps the map it was given at start ("scene").
  bool resample_maps = true;
  envs::DelayModel delay;

  TransferMode transfer = TransferMode::kScratch;
  std::string pretrained;  // checkpoint path for transfer modes

  std::string out_dir;  // metrics.jsonl and checkpoints; empty disables output
  int checkpoint_every = 50;

  void validate() const;
  nn::NetSpec net_spec() const;
  nn::LossConfig loss_config() const { return {clip_eps, value_coef, entropy_coef}; }
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

// Applies "dotted.key=value" overrides, e.g. "env.max_episode_steps=200".
void apply_override(TrainConfig& c, const std::string& assignment);

}  // namespace ddppo::trainer

namespace ddppo::trainer {

// Reads a JSON config (empty path = defaults) and applies overrides in order.
TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace ddppo::trainer

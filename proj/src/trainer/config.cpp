#include "ddppo/trainer/config.hpp"

#include <fstream>

#include "ddppo/common/error.hpp"

namespace ddppo::trainer {

using nlohmann::json;

std::string to_string(TransferMode m) {
  switch (m) {
    case TransferMode::kScratch:
      return "scratch";
    case TransferMode::kFrozenEncoder:
      return "frozen_encoder";
    case TransferMode::kFinetune:
      return "finetune";
  }
  return "scratch";
}

TransferMode transfer_mode_from_string(const std::string& s) {
  if (s == "scratch") return TransferMode::kScratch;
  if (s == "frozen_encoder") return TransferMode::kFrozenEncoder;
  if (s == "finetune") return TransferMode::kFinetune;
  throw ConfigError("unknown transfer mode '" + s + "' (expected scratch, frozen_encoder or finetune)");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(gae_tau >= 0.0 && gae_tau <= 1.0, "gae_tau must lie in [0, 1]");
  require(clip_eps > 0.0 && clip_eps < 1.0, "clip_eps must lie in (0, 1)");
  require(rollout_len >= 1, "rollout_len must be >= 1");
  require(envs_per_worker >= 1, "envs_per_worker must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(minibatches >= 1 && envs_per_worker % minibatches == 0,
          "minibatches must divide envs_per_worker");
  require(lr > 0.0, "lr must be positive");
  require(value_coef >= 0.0 && entropy_coef >= 0.0, "loss coefficients must be non-negative");
  require(preempt_p > 0.0 && preempt_p <= 1.0, "preempt_p must lie in (0, 1]");
  require(total_steps >= 0, "total_steps must be >= 0");
  require(num_train_maps >= 1, "num_train_maps must be >= 1");
  require(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require(maps.obstacle_density >= 0.0 && maps.obstacle_density < 1.0, "maps.obstacle_density must lie in [0, 1)");
  require(transfer == TransferMode::kScratch || !pretrained.empty(), "transfer modes need a pretrained checkpoint");
  net_spec().validate();
}

nn::NetSpec TrainConfig::net_spec() const {
  nn::NetSpec s;
  s.obs_dim = envs::observation_dim(env.patch_size);
  s.hidden_dims = hidden_dims;
  s.num_actions = envs::kNumActions;
  return s;
}

namespace {

json env_to_json(const envs::EnvConfig& e) {
  return {{"task", envs::to_string(e.task)},
          {"max_episode_steps", e.max_episode_steps},
          {"min_geo", e.min_geo},
          {"max_geo", e.max_geo},
          {"patch_size", e.patch_size},
          {"success_radius_cells", e.success_radius_cells},
          {"slack_penalty", e.slack_penalty},
          {"success_reward_scale", e.success_reward_scale},
          {"flee_reward_scale", e.flee_reward_scale},
          {"explore_reward_scale", e.explore_reward_scale},
          {"explore_block_m", e.explore_block_m},
          {"dummy_goal", e.dummy_goal}};
}

void env_from_json(const json& j, envs::EnvConfig& e) {
  e.task = envs::task_from_string(j.at("task").get<std::string>());
  j.at("max_episode_steps").get_to(e.max_episode_steps);
  j.at("min_geo").get_to(e.min_geo);
  j.at("max_geo").get_to(e.max_geo);
  j.at("patch_size").get_to(e.patch_size);
  j.at("success_radius_cells").get_to(e.success_radius_cells);
  j.at("slack_penalty").get_to(e.slack_penalty);
  j.at("success_reward_scale").get_to(e.success_reward_scale);
  j.at("flee_reward_scale").get_to(e.flee_reward_scale);
  j.at("explore_reward_scale").get_to(e.explore_reward_scale);
  j.at("explore_block_m").get_to(e.explore_block_m);
  j.at("dummy_goal").get_to(e.dummy_goal);
}

// Rejects keys of `patch` that `base` does not define.
void check_keys(const json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) return;
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    const json& b = base.at(it.key());
    if (b.is_object() && b.value("kind", json()).is_null()) check_keys(b, it.value(), path);
  }
}

}  // namespace

void to_json(json& j, const TrainConfig& c) {
  j = {{"gamma", c.gamma},
       {"gae_tau", c.gae_tau},
       {"clip_eps", c.clip_eps},
       {"rollout_len", c.rollout_len},
       {"envs_per_worker", c.envs_per_worker},
       {"epochs", c.epochs},
       {"minibatches", c.minibatches},
       {"lr", c.lr},
       {"value_coef", c.value_coef},
       {"entropy_coef", c.entropy_coef},
       {"max_grad_norm", c.max_grad_norm},
       {"preempt_p", c.preempt_p},
       {"total_steps", c.total_steps},
       {"seed", c.seed},
       {"hidden_dims", c.hidden_dims},
       {"env", env_to_json(c.env)},
       {"maps",
        {{"width", c.maps.width},
         {"height", c.maps.height},
         {"obstacle_density", c.maps.obstacle_density},
         {"cell_size", c.maps.cell_size},
         {"base_seed", c.maps.base_seed}}},
       {"num_train_maps", c.num_train_maps},
       {"resample_maps", c.resample_maps},
       {"delay", c.delay},
       {"transfer", to_string(c.transfer)},
       {"pretrained", c.pretrained},
       {"out_dir", c.out_dir},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const json& j, TrainConfig& c) {
  const TrainConfig defaults;
  json base = defaults;
  check_keys(base, j, "");
  base.merge_patch(j);
  try {
    base.at("gamma").get_to(c.gamma);
    base.at("gae_tau").get_to(c.gae_tau);
    base.at("clip_eps").get_to(c.clip_eps);
    base.at("rollout_len").get_to(c.rollout_len);
    base.at("envs_per_worker").get_to(c.envs_per_worker);
    base.at("epochs").get_to(c.epochs);
    base.at("minibatches").get_to(c.minibatches);
    base.at("lr").get_to(c.lr);
    base.at("value_coef").get_to(c.value_coef);
    base.at("entropy_coef").get_to(c.entropy_coef);
    base.at("max_grad_norm").get_to(c.max_grad_norm);
    base.at("preempt_p").get_to(c.preempt_p);
    base.at("total_steps").get_to(c.total_steps);
    base.at("seed").get_to(c.seed);
    base.at("hidden_dims").get_to(c.hidden_dims);
    env_from_json(base.at("env"), c.env);
    const json& m = base.at("maps");
    m.at("width").get_to(c.maps.width);
    m.at("height").get_to(c.maps.height);
    m.at("obstacle_density").get_to(c.maps.obstacle_density);
    m.at("cell_size").get_to(c.maps.cell_size);
    m.at("base_seed").get_to(c.maps.base_seed);
    base.at("num_train_maps").get_to(c.num_train_maps);
    base.at("resample_maps").get_to(c.resample_maps);
    base.at("delay").get_to(c.delay);
    c.transfer = transfer_mode_from_string(base.at("transfer").get<std::string>());
    base.at("pretrained").get_to(c.pretrained);
    base.at("out_dir").get_to(c.out_dir);
    base.at("checkpoint_every").get_to(c.checkpoint_every);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void apply_override(TrainConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare strings
  }
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  json current = c;
  check_keys(current, patch, "");
  current.merge_patch(patch);
  c = current.get<TrainConfig>();
}

}  // namespace ddppo::trainer

namespace ddppo::trainer {

TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    c = j.get<TrainConfig>();
  }
  for (const auto& o : overrides) apply_override(c, o);
  c.validate();
  return c;
}

}  // namespace ddppo::trainer

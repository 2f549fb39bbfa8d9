#include "ddppo/trainer/trainer.hpp"

#include <chrono>
#include <cstdio>

#include "ddppo/common/error.hpp"
#include "ddppo/common/log.hpp"
#include "ddppo/nn/ppo_loss.hpp"

namespace ddppo::trainer {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

void to_json(json& j, const IterationStats& s) {
  j = {{"iteration", s.iteration},
       {"rollout_len", s.rollout_len},
       {"rollout_lens", s.rollout_lens},
       {"steps_collected", s.steps_collected},
       {"steps_total", s.steps_total},
       {"cumulative_steps", s.cumulative_steps},
       {"preempted", s.preempted},
       {"preempted_workers", s.preempted_workers},
       {"policy_loss", s.policy_loss},
       {"value_loss", s.value_loss},
       {"entropy", s.entropy},
       {"clip_fraction", s.clip_fraction},
       {"grad_norm", s.grad_norm},
       {"episodes", s.episodes},
       {"mean_episode_reward", s.mean_episode_reward},
       {"success", s.success},
       {"spl", s.spl},
       {"flee_distance", s.flee_distance},
       {"visited_blocks", s.visited_blocks},
       {"collect_s", s.collect_s},
       {"optimize_s", s.optimize_s},
       {"allreduce_s", s.allreduce_s},
       {"params_hash", s.params_hash}};
}

void from_json(const json& j, IterationStats& s) {
  j.at("iteration").get_to(s.iteration);
  j.at("rollout_len").get_to(s.rollout_len);
  j.at("rollout_lens").get_to(s.rollout_lens);
  j.at("steps_collected").get_to(s.steps_collected);
  j.at("steps_total").get_to(s.steps_total);
  j.at("cumulative_steps").get_to(s.cumulative_steps);
  j.at("preempted").get_to(s.preempted);
  j.at("preempted_workers").get_to(s.preempted_workers);
  j.at("policy_loss").get_to(s.policy_loss);
  j.at("value_loss").get_to(s.value_loss);
  j.at("entropy").get_to(s.entropy);
  j.at("clip_fraction").get_to(s.clip_fraction);
  j.at("grad_norm").get_to(s.grad_norm);
  j.at("episodes").get_to(s.episodes);
  j.at("mean_episode_reward").get_to(s.mean_episode_reward);
  j.at("success").get_to(s.success);
  j.at("spl").get_to(s.spl);
  j.at("flee_distance").get_to(s.flee_distance);
  j.at("visited_blocks").get_to(s.visited_blocks);
  j.at("collect_s").get_to(s.collect_s);
  j.at("optimize_s").get_to(s.optimize_s);
  j.at("allreduce_s").get_to(s.allreduce_s);
  j.at("params_hash").get_to(s.params_hash);
}

PretrainedInit load_pretrained(const TrainConfig& config, const nn::Checkpoint* checkpoint, Rng& rng) {
  const nn::NetSpec spec = config.net_spec();
  const nn::Layout layout(spec);
  if (config.transfer == TransferMode::kScratch) {
    return {nn::init_params(spec, rng), nn::FreezeMask::none(layout.num_params())};
  }
  if (checkpoint == nullptr) throw ConfigError("transfer mode " + to_string(config.transfer) + " needs a checkpoint");
  if (checkpoint->params.layout.hash() != layout.hash() || checkpoint->params.size() != layout.num_params()) {
    throw ConfigError("pretrained checkpoint layout does not match the configured network");
  }
  nn::FreezeMask mask = nn::FreezeMask::none(layout.num_params());
  for (std::size_t i = 0; i < layout.num_trunk_layers(); ++i) mask.freeze(layout.trunk(i));

  if (config.transfer == TransferMode::kFrozenEncoder) {
    nn::ParamVector params = nn::init_params(spec, rng);
    for (std::size_t i = 0; i < layout.num_trunk_layers(); ++i) {
      const auto src = checkpoint->params.slice(layout.trunk(i));
      auto dst = params.slice(layout.trunk(i));
      std::copy(src.begin(), src.end(), dst.begin());
    }
    return {std::move(params), std::move(mask)};
  }
  return {nn::reinit_critic(spec, checkpoint->params, rng), std::move(mask)};
}

std::vector<std::shared_ptr<const envs::GridWorld>> make_train_maps(const TrainConfig& config) {
  std::vector<std::shared_ptr<const envs::GridWorld>> maps;
  maps.reserve(static_cast<std::size_t>(config.num_train_maps));
  for (int i = 0; i < config.num_train_maps; ++i) {
    maps.push_back(std::make_shared<const envs::GridWorld>(
        envs::make_split_map(config.maps, envs::MapSplit::kTrain, static_cast<std::size_t>(i))));
  }
  return maps;
}

Worker::Worker(TrainConfig config, distrib::CollectiveHandle& collective, distrib::KvClient* kv)
    : config_(std::move(config)),
      spec_(config_.net_spec()),
      coll_(collective),
      kv_(kv),
      policy_{config_.preempt_p, config_.rollout_len} {
  config_.validate();
  if (coll_.world_size() > 1 && kv_ == nullptr) throw ConfigError("world_size > 1 needs a kv store");
  const auto rank = static_cast<std::uint64_t>(coll_.rank());

  std::optional<nn::Checkpoint> pretrained;
  if (config_.transfer != TransferMode::kScratch) pretrained = nn::load_checkpoint(config_.pretrained, spec_);
  Rng init_rng(derive_seed(config_.seed, kInitStream));
  auto init = load_pretrained(config_, pretrained ? &*pretrained : nullptr, init_rng);
  params_ = std::move(init.params);
  mask_ = std::move(init.mask);
  adam_ = nn::AdamState(params_.size());

  env_rng_ = Rng(derive_seed(config_.seed, kEnvStream, rank));
  action_rng_ = Rng(derive_seed(config_.seed, kActionStream, rank));
  shuffle_rng_ = Rng(derive_seed(config_.seed, kShuffleStream, rank));

  maps_ = make_train_maps(config_);
  Rng delay_rng(derive_seed(config_.seed, kDelayStream, rank));
  slots_.resize(static_cast<std::size_t>(config_.envs_per_worker));
  for (auto& slot : slots_) {
    slot.map_index = env_rng_.uniform_index(maps_.size());
    const auto delay = config_.delay.sample(delay_rng);
    slot.env = std::make_unique<envs::NavEnv>(maps_[slot.map_index], config_.env,
                                              "train-" + std::to_string(slot.map_index), delay);
    slot.obs = slot.env->reset(env_rng_).to_vector();
  }
}

std::uint64_t Worker::env_seed() const { return derive_seed(config_.seed, kEnvStream, static_cast<std::uint64_t>(coll_.rank())); }

void Worker::reset_slot(EnvSlot& slot) {
  if (config_.resample_maps) {
    slot.map_index = env_rng_.uniform_index(maps_.size());
    slot.env = std::make_unique<envs::NavEnv>(maps_[slot.map_index], config_.env,
                                              "train-" + std::to_string(slot.map_index), slot.env->step_delay());
  }
  slot.obs = slot.env->reset(env_rng_).to_vector();
  slot.episode_reward = 0.0;
}

rollout::RolloutBuffer Worker::collect_rollout() {
  const auto t0 = Clock::now();
  const int n = coll_.world_size();
  const auto T = static_cast<std::size_t>(config_.rollout_len);
  rollout::RolloutBuffer buffer(slots_.size(), T, spec_.obs_dim);
  buffer.params_hash = params_.content_hash();
  episode_totals_ = {};
  last_preempted_ = false;

  const bool can_preempt = n > 1 && policy_.threshold_count(n) < n;
  int steps = 0;
  while (steps < config_.rollout_len) {
    for (std::size_t e = 0; e < slots_.size(); ++e) {
      EnvSlot& slot = slots_[e];
      const auto out = nn::forward(spec_, params_, slot.obs);
      const auto sample = nn::sample_action(out.action_logits, action_rng_);
      const auto result = slot.env->step(sample.action);
      buffer.push(e, slot.obs, sample.action, sample.log_prob, out.value, result.reward, result.done);
      slot.episode_reward += result.reward;
      if (result.done) {
        episode_totals_.count += 1;
        episode_totals_.reward += slot.episode_reward;
        episode_totals_.success += result.info.success ? 1.0 : 0.0;
        episode_totals_.spl += result.info.spl;
        episode_totals_.flee += result.info.flee_distance;
        episode_totals_.visited += result.info.visited_count;
        reset_slot(slot);
      } else {
        slot.obs = result.obs.to_vector();
      }
    }
    ++steps;
    if (can_preempt && steps < config_.rollout_len &&
        distrib::should_preempt(*kv_, iteration_, policy_, steps, n)) {
      last_preempted_ = true;
      break;
    }
  }
  if (n > 1 && !last_preempted_) distrib::report_rollout_done(*kv_, iteration_);

  for (std::size_t e = 0; e < slots_.size(); ++e) {
    buffer.set_bootstrap(e, nn::forward(spec_, params_, slots_[e].obs).value);
  }
  last_collect_s_ = seconds_since(t0);
  return buffer;
}

IterationStats Worker::update(const rollout::RolloutBuffer& buffer) {
  buffer.validate();
  if (buffer.params_hash != params_.content_hash()) {
    throw ProtocolError("rollout was collected with parameters other than the current snapshot");
  }
  const auto t0 = Clock::now();
  IterationStats stats;
  stats.iteration = iteration_;
  stats.rollout_len = static_cast<int>(buffer.steps_collected(0));
  stats.steps_collected = static_cast<std::int64_t>(buffer.total_steps());
  stats.preempted = last_preempted_;
  stats.collect_s = last_collect_s_;

  const auto adv = rollout::compute_gae(buffer, config_.gamma, config_.gae_tau);
  const auto loss_cfg = config_.loss_config();
  int updates = 0;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    const auto batches =
        rollout::make_ppo_batches(buffer, adv, shuffle_rng_, static_cast<std::size_t>(config_.minibatches));
    for (const auto& batch : batches) {
      nn::LossAndGrad lg;
      try {
        lg = nn::loss_and_grad(spec_, params_, batch, loss_cfg);
      } catch (const NumericalError& e) {
        json diag = {{"rank", coll_.rank()},
                     {"iteration", iteration_},
                     {"epoch", epoch},
                     {"tensor", e.tensor()},
                     {"error", e.what()},
                     {"batch_size", batch.size()},
                     {"params_hash", params_.content_hash()}};
        if (!config_.out_dir.empty()) {
          std::filesystem::create_directories(config_.out_dir);
          std::ofstream(std::filesystem::path(config_.out_dir) /
                        ("nan_rank" + std::to_string(coll_.rank()) + ".json"))
              << diag.dump(2) << '\n';
        }
        coll_.abort();
        throw FatalError("non-finite loss: " + diag.dump());
      }
      const auto ta = Clock::now();
      coll_.allreduce_mean(std::span<double>(lg.grad.values));
      stats.allreduce_s += seconds_since(ta);
      const auto info =
          nn::adam_step(params_, lg.grad.values, adam_, config_.lr, mask_, config_.max_grad_norm);
      stats.policy_loss += lg.stats.policy_loss;
      stats.value_loss += lg.stats.value_loss;
      stats.entropy += lg.stats.entropy;
      stats.clip_fraction += lg.stats.clip_fraction;
      stats.grad_norm += info.grad_norm;
      ++updates;
    }
  }
  if (updates > 0) {
    stats.policy_loss /= updates;
    stats.value_loss /= updates;
    stats.entropy /= updates;
    stats.clip_fraction /= updates;
    stats.grad_norm /= updates;
  }
  stats.params_hash = params_.content_hash();
  stats.optimize_s = seconds_since(t0);
  return stats;
}

IterationStats Worker::run_iteration() {
  const auto buffer = collect_rollout();
  IterationStats stats = update(buffer);

  // Group-wide step count and episode aggregates.
  std::vector<double> sums{static_cast<double>(stats.steps_collected),
                           stats.preempted ? 1.0 : 0.0,
                           episode_totals_.count,
                           episode_totals_.reward,
                           episode_totals_.success,
                           episode_totals_.spl,
                           episode_totals_.flee,
                           episode_totals_.visited};
  coll_.allreduce_sum(sums);
  stats.steps_total = static_cast<std::int64_t>(sums[0]);
  stats.preempted_workers = static_cast<int>(sums[1]);
  stats.episodes = static_cast<int>(sums[2]);
  if (sums[2] > 0) {
    stats.mean_episode_reward = sums[3] / sums[2];
    stats.success = sums[4] / sums[2];
    stats.spl = sums[5] / sums[2];
    stats.flee_distance = sums[6] / sums[2];
    stats.visited_blocks = sums[7] / sums[2];
  }
  for (auto len : coll_.allgather_u64(static_cast<std::uint64_t>(stats.rollout_len))) {
    stats.rollout_lens.push_back(static_cast<int>(len));
  }
  const auto hashes = coll_.allgather_u64(stats.params_hash);
  for (std::size_t r = 0; r < hashes.size(); ++r) {
    if (hashes[r] != stats.params_hash) {
      throw FatalError("parameters diverged: rank " + std::to_string(r) + " disagrees with rank " +
                       std::to_string(coll_.rank()) + " after iteration " + std::to_string(iteration_));
    }
  }
  cumulative_steps_ += stats.steps_total;
  stats.cumulative_steps = cumulative_steps_;
  ++iteration_;
  return stats;
}

nn::Checkpoint Worker::checkpoint() const {
  return nn::Checkpoint{spec_, params_, cumulative_steps_, action_rng_.serialize()};
}

void Worker::save(const std::string& name) const {
  if (config_.out_dir.empty() || coll_.rank() != 0) return;
  const auto dir = std::filesystem::path(config_.out_dir) / "checkpoints";
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(dir / (name + ".ddpp"), checkpoint());
}

void Worker::write_metrics(const IterationStats& s) {
  if (config_.out_dir.empty() || coll_.rank() != 0) return;
  if (!metrics_) {
    std::filesystem::create_directories(config_.out_dir);
    metrics_ = std::make_unique<std::ofstream>(std::filesystem::path(config_.out_dir) / "metrics.jsonl");
    if (!*metrics_) throw ConfigError("cannot open metrics file in " + config_.out_dir);
  }
  *metrics_ << json(s).dump() << '\n';
  metrics_->flush();
}

std::vector<IterationStats> Worker::train() {
  std::vector<IterationStats> history;
  while (cumulative_steps_ < config_.total_steps) {
    history.push_back(run_iteration());
    write_metrics(history.back());
    if (iteration_ % config_.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "iter_%06lld", static_cast<long long>(iteration_));
      save(name);
    }
  }
  save("final");
  return history;
}

}  // namespace ddppo::trainer

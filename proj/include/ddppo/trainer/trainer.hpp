#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <vector>

#include "ddppo/common/random.hpp"
#include "ddppo/distrib/collective.hpp"
#include "ddppo/distrib/kv_store.hpp"
#include "ddppo/distrib/preemption.hpp"
#include "ddppo/envs/nav_env.hpp"
#include "ddppo/nn/adam.hpp"
#include "ddppo/nn/checkpoint.hpp"
#include "ddppo/rollout/rollout.hpp"
#include "ddppo/trainer/config.hpp"
#include "json.hpp"

namespace ddppo::trainer {

// Per-iteration record; one JSONL line in metrics.jsonl.
struct IterationStats {
  std::int64_t iteration = 0;
  int rollout_len = 0;                // steps per env on this rank
  std::vector<int> rollout_lens;      // per rank
  std::int64_t steps_collected = 0;   // this rank
  std::int64_t steps_total = 0;       // summed over ranks
  std::int64_t cumulative_steps = 0;  // summed over ranks and iterations
  bool preempted = false;
  int preempted_workers = 0;

  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;

  // Episodes that ended during this rollout, over all ranks.
  int episodes = 0;
  double mean_episode_reward = 0.0;
  double success = 0.0;
  double spl = 0.0;
  double flee_distance = 0.0;
  double visited_blocks = 0.0;

  double collect_s = 0.0;
  double optimize_s = 0.0;
  double allreduce_s = 0.0;

  std::uint64_t params_hash = 0;
};

void to_json(nlohmann::json& j, const IterationStats& s);
void from_json(const nlohmann::json& j, IterationStats& s);

struct PretrainedInit {
  nn::ParamVector params;
  nn::FreezeMask mask;
};

// scratch: fresh init, nothing frozen. frozen_encoder: trunk copied from the
// checkpoint and frozen, heads freshly initialized. finetune: everything
// copied, critic reinitialized, trunk frozen. Throws ConfigError on a layout
// mismatch.
PretrainedInit load_pretrained(const TrainConfig& config, const nn::Checkpoint* checkpoint, Rng& rng);

// Training maps shared by all env slots of a worker.
std::vector<std::shared_ptr<const envs::GridWorld>> make_train_maps(const TrainConfig& config);

// One DD-PPO worker. Collectives go through `collective`; the store is only
// needed for preemption when world_size > 1.
class Worker {
 public:
  Worker(TrainConfig config, distrib::CollectiveHandle& collective, distrib::KvClient* kv);

  rollout::RolloutBuffer collect_rollout();
  IterationStats update(const rollout::RolloutBuffer& buffer);
  IterationStats run_iteration();

  // Loops until the summed step budget is met. Rank 0 writes metrics and
  // checkpoints when out_dir is set.
  std::vector<IterationStats> train();

  const TrainConfig& config() const { return config_; }
  const nn::NetSpec& spec() const { return spec_; }
  const nn::ParamVector& params() const { return params_; }
  nn::ParamVector& mutable_params() { return params_; }
  const nn::AdamState& adam() const { return adam_; }
  const nn::FreezeMask& mask() const { return mask_; }
  std::int64_t iteration() const { return iteration_; }
  std::int64_t cumulative_steps() const { return cumulative_steps_; }
  nn::Checkpoint checkpoint() const;

  std::uint64_t env_seed() const;
  std::chrono::nanoseconds env_delay(std::size_t slot) const { return slots_.at(slot).env->step_delay(); }

 private:
  struct EnvSlot {
    std::unique_ptr<envs::NavEnv> env;
    std::size_t map_index = 0;
    std::vector<double> obs;
    double episode_reward = 0.0;
  };
  struct EpisodeTotals {
    double count = 0, reward = 0, success = 0, spl = 0, flee = 0, visited = 0;
  };

  void reset_slot(EnvSlot& slot);
  void write_metrics(const IterationStats& s);
  void save(const std::string& name) const;

  TrainConfig config_;
  nn::NetSpec spec_;
  distrib::CollectiveHandle& coll_;
  distrib::KvClient* kv_;
  distrib::PreemptionPolicy policy_;

  nn::ParamVector params_;
  nn::AdamState adam_;
  nn::FreezeMask mask_;

  Rng env_rng_;
  Rng action_rng_;
  Rng shuffle_rng_;

  std::vector<std::shared_ptr<const envs::GridWorld>> maps_;
  std::vector<EnvSlot> slots_;
  EpisodeTotals episode_totals_;
  bool last_preempted_ = false;
  double last_collect_s_ = 0.0;

  std::int64_t iteration_ = 0;
  std::int64_t cumulative_steps_ = 0;
  std::unique_ptr<std::ofstream> metrics_;
};

// Seed streams; the serial reference in the tests derives the same ones.
enum SeedStream : std::uint64_t {
  kInitStream = 1,
  kEnvStream = 2,
  kActionStream = 3,
  kShuffleStream = 4,
  kDelayStream = 5,
};

}  // namespace ddppo::trainer
